"""From a refined similarity matrix to one image-to-image score.

Votes are the row and column maxima of the refined block; each vote is mapped
through the vote function ``f`` and all of them are summed. The two
parameter-free baselines (Chamfer on the raw block and Chamfer after plain
OT with unit dustbin gains) live here as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .descriptors import ProjectedDescriptorSet, RawDescriptorSet, project, select_top_m
from .linalg import ShapeError, matmul_transposed_left
from .model import VoteFunction
from .transport import OtConfig, augment, marginals, scaled_votes, solve

if TYPE_CHECKING:
    from .model import ModelParams

__all__ = [
    "VoteFunction", "VoteSet", "PairScore", "select_votes", "apply_f", "refine",
    "pair_similarity", "chamfer_similarity", "chamfer_ot_similarity",
    "score_batch", "ElvisScorer", "ChamferScorer", "ChamferOTScorer",
]


@dataclass
class VoteSet:
    row_votes: np.ndarray
    col_votes: np.ndarray
    row_argmax: np.ndarray
    col_argmax: np.ndarray


@dataclass
class PairScore:
    score: float
    votes: VoteSet | None = None
    row_strengths: np.ndarray | None = None
    col_strengths: np.ndarray | None = None
    similarity: np.ndarray | None = None  # raw block S
    refined: np.ndarray | None = None  # refined block S'
    query_gains: np.ndarray | None = None
    candidate_gains: np.ndarray | None = None

    @property
    def per_vote_strengths(self) -> np.ndarray | None:
        if self.row_strengths is None:
            return None
        return np.concatenate([self.row_strengths, self.col_strengths])


def select_votes(m) -> VoteSet:
    """Row and column maxima of ``m`` (batched over leading axes); ties pick the lowest index."""
    m = np.asarray(m)
    if m.size == 0:
        raise ShapeError("cannot take votes of an empty matrix")
    row_arg = m.argmax(axis=-1)
    col_arg = m.argmax(axis=-2)
    row = np.take_along_axis(m, row_arg[..., None], axis=-1)[..., 0]
    col = np.take_along_axis(m, col_arg[..., None, :], axis=-2)[..., 0, :]
    return VoteSet(row, col, row_arg, col_arg)


def vote_strength(x, f: VoteFunction | None):
    """``f`` applied elementwise; without ``f`` votes are clamped to [0, 1]."""
    if f is None:
        return np.clip(x, 0.0, 1.0)
    return f(x)


def apply_f(votes: VoteSet, f: VoteFunction | None):
    return vote_strength(votes.row_votes, f), vote_strength(votes.col_votes, f)


def refine(s, u, v, omega, cfg: OtConfig):
    """Refined similarity block(s); ``u is None`` means plain OT without dustbins."""
    s = np.asarray(s, dtype=float)
    m, n = s.shape[-2:]
    if u is None:
        a, b = marginals(m, n, dustbin=False)
        return solve(s, a, b, cfg)
    a, b = marginals(m, n)
    return solve(augment(s, u, v, omega), a, b, cfg)[..., :m, :n]


def pair_similarity(
    q: ProjectedDescriptorSet,
    x: ProjectedDescriptorSet,
    model: "ModelParams",
    cfg: OtConfig,
    breakdown: bool = True,
) -> PairScore:
    """Similarity of two projected descriptor sets under a trained model.

    Only the inference parts of ``model`` are read; the warp function never is.
    """
    if q.count == 0 or x.count == 0:
        raise ShapeError("descriptor sets must be nonempty")
    s = matmul_transposed_left(q.descriptors, x.descriptors)
    u = model.gains(q.descriptors)
    v = model.gains(x.descriptors)
    omega = float(model.omega) if model.omega is not None else None
    refined = refine(s, u, v, omega, cfg)
    votes = select_votes(refined)
    rows, cols = apply_f(votes, model.f)
    score = float(rows.sum() + cols.sum())
    if not breakdown:
        return PairScore(score)
    return PairScore(score, votes, rows, cols, s, refined, u, v)


def chamfer_similarity(q: ProjectedDescriptorSet, x: ProjectedDescriptorSet) -> float:
    s = matmul_transposed_left(q.descriptors, x.descriptors)
    return float(s.max(axis=1).sum() + s.max(axis=0).sum())


def chamfer_ot_similarity(q: ProjectedDescriptorSet, x: ProjectedDescriptorSet, cfg: OtConfig) -> float:
    s = matmul_transposed_left(q.descriptors, x.descriptors)
    refined = refine(s, np.ones(q.count), np.ones(x.count), 1.0, cfg)
    return float(refined.max(axis=1).sum() + refined.max(axis=0).sum())


# --- batched scorers for re-ranking ------------------------------------

# cap on float64 entries materialized per chunk of pairs
_CHUNK_ENTRIES = 4_000_000


class _CachedScorer:
    """Projects each image once, then scores a query against many candidates in batches.

    ``raw`` maps image ids to descriptor sets; ``m`` keeps only the strongest
    descriptors of each image. ``dtype`` applies to the similarity matmul only.
    """

    def __init__(self, raw: Mapping[str, RawDescriptorSet], m: int | None = None, dtype=np.float64):
        self.raw = raw
        self.m = m
        self.dtype = dtype
        self._cache: dict[str, tuple] = {}

    def _prepare(self, raw: RawDescriptorSet) -> tuple:
        raise NotImplementedError

    def entry(self, image_id: str) -> tuple:
        if image_id not in self._cache:
            try:
                raw = self.raw[image_id]
            except KeyError:
                raise KeyError(f"no descriptors for image {image_id!r}") from None
            if self.m is not None:
                raw = select_top_m(raw, self.m)
            self._cache[image_id] = self._prepare(raw)
        return self._cache[image_id]

    def _score_group(self, query: tuple, cands: list[tuple]) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, query_id: str, candidate_ids: Sequence[str]) -> np.ndarray:
        query = self.entry(query_id)
        out = np.empty(len(candidate_ids))
        groups: dict[int, list[int]] = {}
        for pos, cid in enumerate(candidate_ids):
            groups.setdefault(self.entry(cid)[0].shape[1], []).append(pos)
        for n, positions in groups.items():
            per_pair = (query[0].shape[1] + 1) * (n + 1)
            step = max(1, _CHUNK_ENTRIES // per_pair)
            for start in range(0, len(positions), step):
                chunk = positions[start:start + step]
                cands = [self.entry(candidate_ids[p]) for p in chunk]
                out[chunk] = self._score_group(query, cands)
        return out


def score_batch(model: "ModelParams", cfg: OtConfig, q_desc, q_gains, x_desc, x_gains) -> np.ndarray:
    """Scores of one query against a stack of candidates with equal descriptor counts.

    ``q_desc`` is (D, Mq) and ``x_desc`` (B, D, Mx), both already projected;
    gains are the precomputed dustbin gains (None without dustbins).
    """
    s = q_desc.T @ x_desc  # (B, Mq, Mx)
    uu = None if q_gains is None else np.broadcast_to(q_gains, s.shape[:-1])
    omega = None if q_gains is None else float(model.omega)
    votes = None
    if not cfg.log_domain:
        votes = scaled_votes(s, uu, x_gains, omega, cfg)
    if votes is None:
        refined = refine(s.astype(np.float64), uu, x_gains, omega, OtConfig(cfg.lam, cfg.iterations))
        votes = refined.max(axis=-1), refined.max(axis=-2)
    rows = vote_strength(votes[0], model.f)
    cols = vote_strength(votes[1], model.f)
    return rows.sum(axis=-1) + cols.sum(axis=-1)


class ElvisScorer(_CachedScorer):
    def __init__(self, model: "ModelParams", cfg: OtConfig, raw, m=None, dtype=np.float64):
        super().__init__(raw, m, dtype)
        self.model = model
        self.cfg = cfg

    def _prepare(self, raw):
        desc = project(raw, self.model.projection).descriptors
        return desc.astype(self.dtype), self.model.gains(desc)

    def _score_group(self, query, cands):
        xd = np.stack([c[0] for c in cands])
        xg = None if query[1] is None else np.stack([c[1] for c in cands])
        return score_batch(self.model, self.cfg, query[0], query[1], xd, xg)


class ChamferScorer(_CachedScorer):
    def _prepare(self, raw):
        return (project(raw, None).descriptors.astype(self.dtype),)

    def _score_group(self, query, cands):
        xd = np.stack([c[0] for c in cands])
        s = query[0].T @ xd
        return s.max(axis=-1).sum(axis=-1) + s.max(axis=-2).sum(axis=-1)


class ChamferOTScorer(ChamferScorer):
    def __init__(self, cfg: OtConfig, raw, m=None, dtype=np.float64):
        super().__init__(raw, m, dtype)
        self.cfg = cfg

    def _score_group(self, query, cands):
        xd = np.stack([c[0] for c in cands])
        s = (query[0].T @ xd).astype(np.float64)
        ones_q = np.ones(s.shape[:-1])
        ones_x = np.ones(s.shape[:-2] + s.shape[-1:])
        refined = refine(s, ones_q, ones_x, 1.0, self.cfg)
        return refined.max(axis=-1).sum(axis=-1) + refined.max(axis=-2).sum(axis=-1)
