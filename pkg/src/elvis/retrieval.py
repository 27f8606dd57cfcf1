"""Ranked lists, shortlist re-ranking, and AP / mAP@K.

mAP@K truncates each list at K and divides by min(R, K), where R counts every
ground-truth positive of the query, retrieved or not. Queries without
positives are left out of the mean.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Scorer = Callable[[str, Sequence[str]], np.ndarray]


class RankingFormatError(ValueError):
    pass


@dataclass
class RankedList:
    query_id: str
    entries: list[tuple[str, float]]

    def __post_init__(self):
        ids = [c for c, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate candidates in ranking of {self.query_id!r}")

    @property
    def ids(self) -> list[str]:
        return [c for c, _ in self.entries]

    @classmethod
    def from_scores(cls, query_id: str, ids: Sequence[str], scores: Sequence[float]) -> "RankedList":
        """Sort by descending score; equal scores keep their input order."""
        order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
        return cls(query_id, [(ids[i], float(scores[i])) for i in order])


def rerank(lst: RankedList, k: int, scorer: Scorer) -> RankedList:
    """Re-score the top ``k`` entries and sort them; the tail keeps its order and scores."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    head = lst.entries[:k]
    if not head:
        return RankedList(lst.query_id, [])
    ids = [c for c, _ in head]
    new = np.asarray(scorer(lst.query_id, ids), dtype=float)
    reranked = RankedList.from_scores(lst.query_id, ids, new)
    return RankedList(lst.query_id, reranked.entries + list(lst.entries[k:]))


def average_precision(ranked_ids: Sequence[str], positives: Iterable[str], denominator: int | None = None) -> float:
    positives = set(positives)
    if not positives:
        raise ValueError("average precision needs at least one positive")
    denom = len(positives) if denominator is None else denominator
    hits = 0
    total = 0.0
    for rank, cid in enumerate(ranked_ids, start=1):
        if cid in positives:
            hits += 1
            total += hits / rank
    return total / denom


def mean_average_precision(lists: Iterable[RankedList], gt: Mapping[str, set[str]], k: int | None = None) -> float:
    """mAP over queries with at least one positive; ``k`` truncates (mAP@k)."""
    if k is not None and k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    aps = []
    for lst in lists:
        pos = gt.get(lst.query_id)
        if not pos:
            continue
        ids = lst.ids if k is None else lst.ids[:k]
        denom = len(pos) if k is None else min(len(pos), k)
        aps.append(average_precision(ids, pos, denom))
    if not aps:
        raise ValueError("no query has ground-truth positives")
    return float(np.mean(aps))


def map_at_k(lists: Iterable[RankedList], gt: Mapping[str, set[str]], k: int) -> float:
    return mean_average_precision(lists, gt, k)


def parse_metric(name: str) -> int | None:
    """'map' -> None (full lists); 'map@100' or 'mAP@100' -> 100."""
    key = name.strip().lower()
    if key == "map":
        return None
    if key.startswith("map@"):
        try:
            k = int(key[4:])
        except ValueError:
            raise ValueError(f"bad metric {name!r}") from None
        if k >= 1:
            return k
    raise ValueError(f"unknown metric {name!r}; use 'map' or 'map@K'")


# --- JSON-lines files ----------------------------------------------------


def _iter_jsonl(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise RankingFormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None


def read_rankings(path) -> list[RankedList]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        try:
            entries = [(str(c), float(s)) for c, s in obj["ranking"]]
            out.append(RankedList(str(obj["query"]), entries))
        except (KeyError, TypeError, ValueError) as e:
            raise RankingFormatError(f"{path}:{lineno}: bad ranking record ({e})") from None
    return out


def write_rankings(path, lists: Iterable[RankedList]) -> None:
    with open(path, "w") as fh:
        for lst in lists:
            fh.write(json.dumps({"query": lst.query_id, "ranking": [[c, s] for c, s in lst.entries]}))
            fh.write("\n")


def read_ground_truth(path) -> dict[str, set[str]]:
    out = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            out[str(obj["query"])] = {str(p) for p in obj["positives"]}
        except (KeyError, TypeError) as e:
            raise RankingFormatError(f"{path}:{lineno}: bad ground-truth record ({e})") from None
    return out


def write_ground_truth(path, gt: Mapping[str, Iterable[str]]) -> None:
    with open(path, "w") as fh:
        for q, pos in gt.items():
            fh.write(json.dumps({"query": q, "positives": sorted(pos)}))
            fh.write("\n")


def write_metric_report(path, rows: Iterable[tuple[str, str, str, float]]) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "method", "metric", "value"])
        for dataset, method, metric, value in rows:
            w.writerow([dataset, method, metric, f"{value:.6f}"])
