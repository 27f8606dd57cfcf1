import numpy as np
import pytest

from elvis.descriptors import project
from elvis.retrieval import mean_average_precision
from elvis.scoring import chamfer_similarity
from elvis.synthetic import SyntheticSpec, generate_synthetic


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(shared_fraction=1.5)
    with pytest.raises(ValueError):
        SyntheticSpec(instance_count=1)


def test_deterministic_and_shapes():
    spec = SyntheticSpec(instance_count=4, images_per_instance=3, seed=5)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert len(a.sets) == 12
    for x, y in zip(a.sets, b.sets):
        assert x.image_id == y.image_id
        assert x.descriptors.tobytes() == y.descriptors.tobytes()
        assert x.strengths.tobytes() == y.strengths.tobytes()
    s = a.sets[0]
    assert s.descriptors.shape == (32, 40 + 40) and s.descriptors.dtype == np.float32


def test_splits_and_ground_truth():
    data = generate_synthetic(SyntheticSpec(instance_count=6, images_per_instance=4, seed=1))
    train, test = set(data.ids("train")), set(data.ids("test"))
    assert len(train) == len(test) == 12 and not train & test
    for q, pos in data.ground_truth.items():
        assert len(pos) == 3
        assert all(data.labels[p] == data.labels[q] and data.split[p] == data.split[q] for p in pos)
    for r in data.rankings:
        assert r.query_id not in r.ids and len(r.ids) == 11
        assert all(data.split[c] == data.split[r.query_id] for c in r.ids)


def test_full_sharing_separates_instances():
    spec = SyntheticSpec(instance_count=5, images_per_instance=3, shared_fraction=1.0, noise_sigma=0.0,
                         template_size=40, distractor_descriptor_count=0, seed=2)
    data = generate_synthetic(spec)
    proj = {s.image_id: project(s, None) for s in data.sets}
    ids = list(proj)
    for q in ids:
        same = [chamfer_similarity(proj[q], proj[c]) for c in ids if c != q and data.labels[c] == data.labels[q]]
        other = [chamfer_similarity(proj[q], proj[c]) for c in ids if data.labels[c] != data.labels[q]]
        assert min(same) > max(other)


def test_initial_ranking_carries_signal():
    data = generate_synthetic(SyntheticSpec(instance_count=10, images_per_instance=5, seed=0))
    lists = data.rankings_for("test")
    chance = 4 / 24
    assert mean_average_precision(lists, data.ground_truth, 100) > chance
