"""Toy instance-retrieval datasets with controllable signal and clutter.

Each instance owns a bank of template descriptors. An image of the instance
mixes noisy copies of template descriptors with fresh random object
descriptors and with background clutter. Clutter is drawn around a few
prototypes from one bank shared by all instances, so it repeats within an
image and matches strongly across unrelated images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .descriptors import RawDescriptorSet
from .linalg import l2_normalize
from .retrieval import RankedList


@dataclass
class SyntheticSpec:
    instance_count: int = 50
    images_per_instance: int = 20
    descriptor_dim: int = 32
    descriptors_per_image: int = 40  # object descriptors, template-shared or fresh
    shared_fraction: float = 0.5
    noise_sigma: float = 0.75
    distractor_descriptor_count: int = 40
    seed: int = 0
    template_size: int = 40
    background_prototypes: int = 6
    prototypes_per_image: int = 2
    background_noise: float = 0.3
    train_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ValueError("shared_fraction must lie in [0, 1]")
        if self.instance_count < 2 or self.images_per_instance < 2:
            raise ValueError("need at least 2 instances with 2 images each")
        if self.noise_sigma < 0 or self.background_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if self.prototypes_per_image > self.background_prototypes:
            raise ValueError("prototypes_per_image exceeds the background bank")

    @property
    def shared_count(self) -> int:
        return int(round(self.shared_fraction * self.descriptors_per_image))


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    sets: list[RawDescriptorSet]
    labels: dict[str, int]  # image id -> instance
    split: dict[str, str]  # image id -> "train" | "test"
    ground_truth: dict[str, set[str]]
    rankings: list[RankedList]
    templates: np.ndarray = field(repr=False, default=None)

    @property
    def images(self) -> dict[str, RawDescriptorSet]:
        return {s.image_id: s for s in self.sets}

    def ids(self, split: str) -> list[str]:
        return [s.image_id for s in self.sets if self.split[s.image_id] == split]

    def rankings_for(self, split: str) -> list[RankedList]:
        return [r for r in self.rankings if self.split[r.query_id] == split]

    def labels_for(self, split: str) -> dict[str, int]:
        return {i: self.labels[i] for i in self.ids(split)}


def _unit(rng, n, dim):
    return l2_normalize(rng.standard_normal((n, dim)), axis=1)[0]


def _jitter(rng, base, sigma):
    dim = base.shape[1]
    return l2_normalize(base + sigma * rng.standard_normal(base.shape) / np.sqrt(dim), axis=1)[0]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    dim = spec.descriptor_dim
    templates = np.stack([_unit(rng, spec.template_size, dim) for _ in range(spec.instance_count)])
    background = _unit(rng, spec.background_prototypes, dim)
    n_shared = spec.shared_count
    if n_shared > spec.template_size:
        raise ValueError("shared descriptor count exceeds template_size")
    n_fresh = spec.descriptors_per_image - n_shared
    n_train_inst = int(round(spec.train_fraction * spec.instance_count))

    sets, labels, split = [], {}, {}
    for inst in range(spec.instance_count):
        for k in range(spec.images_per_instance):
            image_id = f"i{inst:03d}_{k:02d}"
            parts, strengths = [], []
            if n_shared:
                rows = rng.choice(spec.template_size, n_shared, replace=False)
                parts.append(_jitter(rng, templates[inst, rows], spec.noise_sigma))
                strengths.append(rng.uniform(0.25, 1.0, n_shared))
            if n_fresh:
                parts.append(_unit(rng, n_fresh, dim))
                strengths.append(rng.uniform(0.0, 0.75, n_fresh))
            if spec.distractor_descriptor_count:
                protos = rng.choice(spec.background_prototypes, spec.prototypes_per_image, replace=False)
                which = protos[rng.integers(len(protos), size=spec.distractor_descriptor_count)]
                parts.append(_jitter(rng, background[which], spec.background_noise))
                strengths.append(rng.uniform(0.0, 0.75, spec.distractor_descriptor_count))
            desc = np.concatenate(parts, axis=0)
            strength = np.concatenate(strengths)
            perm = rng.permutation(len(strength))
            sets.append(RawDescriptorSet(
                image_id,
                strength[perm].astype(np.float32),
                desc[perm].T.astype(np.float32),
            ))
            labels[image_id] = inst
            split[image_id] = "train" if inst < n_train_inst else "test"

    ground_truth, rankings = {}, []
    for part in ("train", "test"):
        members = [s for s in sets if split[s.image_id] == part]
        if not members:
            continue
        ids = [s.image_id for s in members]
        glob = l2_normalize(np.stack([s.descriptors.astype(float).mean(axis=1) for s in members]), axis=1)[0]
        sims = glob @ glob.T
        for qi, qid in enumerate(ids):
            order = [j for j in np.argsort(-sims[qi], kind="stable") if j != qi]
            rankings.append(RankedList(qid, [(ids[j], float(sims[qi, j])) for j in order]))
            ground_truth[qid] = {i for i in ids if i != qid and labels[i] == labels[qid]}
    return SyntheticData(spec, sets, labels, split, ground_truth, rankings, templates)
