"""Training pairs: mining from global rankings and balanced batch sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class TrainPair:
    query_id: str
    candidate_id: str
    label: int


@dataclass
class Batch:
    pairs: list[TrainPair]
    m: int  # descriptors kept per image for this batch


class PoolExhausted(ValueError):
    pass


def mine_pairs(
    labels: Mapping[str, object],
    rankings: Mapping[str, Sequence[str]],
    rng: np.random.Generator,
    hard_pool: int = 10,
    anchors: Sequence[str] | None = None,
) -> list[TrainPair]:
    """One (anchor, positive) and one (anchor, negative) pair per anchor.

    Negatives are drawn from the ``hard_pool`` highest-ranked non-matching
    candidates of the anchor's global ranking, falling back to a uniformly
    random image of another instance.
    """
    by_instance: dict[object, list[str]] = {}
    for image_id, inst in labels.items():
        by_instance.setdefault(inst, []).append(image_id)
    ids = list(labels)
    pairs = []
    for a in anchors if anchors is not None else ids:
        mates = [i for i in by_instance[labels[a]] if i != a]
        if not mates:
            continue
        pos = mates[rng.integers(len(mates))]
        hard = [c for c in rankings.get(a, ()) if c in labels and labels[c] != labels[a]][:hard_pool]
        if hard:
            neg = hard[rng.integers(len(hard))]
        else:
            while True:
                neg = ids[rng.integers(len(ids))]
                if labels[neg] != labels[a]:
                    break
        pairs.append(TrainPair(a, pos, 1))
        pairs.append(TrainPair(a, neg, 0))
    return pairs


def sample_batch(
    pool: Sequence[TrainPair],
    batch_size: int,
    rng: np.random.Generator,
    m_range: tuple[int, int] = (100, 400),
) -> Batch:
    """Half positive, half negative pairs drawn without replacement, plus a shared M."""
    if batch_size < 2 or batch_size % 2:
        raise ValueError(f"batch_size must be a positive even number, got {batch_size}")
    half = batch_size // 2
    pos = [p for p in pool if p.label]
    neg = [p for p in pool if not p.label]
    for name, group in (("positive", pos), ("negative", neg)):
        if len(group) < half:
            raise PoolExhausted(f"need {half} {name} pairs, pool has {len(group)}")
    chosen = [pos[i] for i in rng.choice(len(pos), half, replace=False)]
    chosen += [neg[i] for i in rng.choice(len(neg), half, replace=False)]
    lo, hi = m_range
    m = int(rng.integers(lo, hi + 1))
    return Batch(chosen, m)
