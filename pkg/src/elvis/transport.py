"""Entropic optimal transport with descriptor-dependent dustbins.

The solver maximizes <P, S_hat> + lam * H(P) under row marginals ``a`` and
column marginals ``b``. It works on scaled log-potentials ``f`` and ``g`` (the
dual variables divided by ``lam``) so that

    P = exp(S_hat / lam + f[:, None] + g[None, :]).

One iteration is a column update followed by a row update, so the row
marginals of the returned plan are exact up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptors import ProjectedDescriptorSet
from .linalg import ShapeError, gelu


class NumericError(FloatingPointError):
    """Non-finite values reached a numerical routine."""


@dataclass
class OtConfig:
    lam: float = 0.1
    iterations: int = 10
    log_domain: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"iterations must be an integer >= 1, got {self.iterations}")
        self.iterations = int(self.iterations)


@dataclass
class DustbinHead:
    """Two-layer MLP mapping a projected descriptor to its dustbin gain."""

    w1: np.ndarray  # (D, D)
    b1: np.ndarray  # (D,)
    w2: np.ndarray  # (D,)
    b2: np.ndarray  # ()

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, bias: float = 0.0):
        bound = 1.0 / np.sqrt(dim)
        return cls(
            w1=rng.uniform(-bound, bound, size=(dim, dim)),
            b1=rng.uniform(-bound, bound, size=dim),
            w2=rng.uniform(-bound, bound, size=dim),
            b2=np.array(float(bias)),
        )


def head_forward(x: np.ndarray, head: DustbinHead):
    """Gains for descriptor columns ``x`` of shape (..., D, M); also returns the pre-activation."""
    pre = head.w1 @ x + head.b1[:, None]
    gains = np.einsum("d,...dm->...m", head.w2, gelu(pre)) + head.b2
    return gains, pre


def dustbin_gains(desc: ProjectedDescriptorSet, head: DustbinHead) -> np.ndarray:
    if desc.dim != head.dim:
        raise ShapeError(f"dustbin head expects dim {head.dim}, got {desc.dim}")
    gains, _ = head_forward(desc.descriptors, head)
    return gains


@dataclass
class AugmentedSimilarity:
    s: np.ndarray
    u: np.ndarray
    v: np.ndarray
    omega: float

    @property
    def m_q(self) -> int:
        return self.s.shape[0]

    @property
    def m_x(self) -> int:
        return self.s.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return augment(self.s, self.u, self.v, self.omega)


def augment(s, u, v, omega):
    """Stack a similarity block with its dustbin column, row and corner.

    Works on batches: ``s`` (..., Mq, Mx), ``u`` (..., Mq), ``v`` (..., Mx).
    """
    s = np.asarray(s, dtype=float)
    *batch, m, n = s.shape
    out = np.empty((*batch, m + 1, n + 1))
    out[..., :m, :n] = s
    out[..., :m, n] = u
    out[..., m, :n] = v
    out[..., m, n] = omega
    return out


def assemble_augmented(s, u, v, omega) -> AugmentedSimilarity:
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if s.ndim != 2:
        raise ShapeError("similarity block must be 2-D")
    if u.shape != (s.shape[0],) or v.shape != (s.shape[1],):
        raise ShapeError(
            f"gain lengths {u.shape}, {v.shape} do not match block {s.shape}"
        )
    return AugmentedSimilarity(s, u, v, float(omega))


def marginals(m_q: int, m_x: int, dustbin: bool = True):
    """Row and column targets; the dustbin entries absorb the other side's full mass."""
    if not dustbin:
        if m_q != m_x:
            raise ShapeError("plain OT without dustbins needs equal descriptor counts")
        return np.ones(m_q), np.ones(m_x)
    a = np.ones(m_q + 1)
    b = np.ones(m_x + 1)
    a[-1] = m_x
    b[-1] = m_q
    return a, b


@dataclass
class TransportPlan:
    p: np.ndarray
    iterations_run: int
    marginal_residual: float
    dustbin: bool = True


def _lse(x, axis):
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return np.squeeze(np.log(np.sum(np.exp(x - mx), axis=axis, keepdims=True)) + mx, axis=axis)


def log_potentials(z, log_a, log_b, iterations):
    """Run the unrolled log-domain updates on scaled scores ``z = S_hat / lam``.

    Returns the potential histories ``fs`` (iterations + 1 entries, ``fs[0]``
    is the zero start) and ``gs`` (iterations entries), which the backward
    pass replays.
    """
    f = np.zeros(z.shape[:-1])
    fs = [f]
    gs = []
    for _ in range(iterations):
        g = log_b - _lse(z + f[..., :, None], axis=-2)
        f = log_a - _lse(z + g[..., None, :], axis=-1)
        gs.append(g)
        fs.append(f)
    return fs, gs


def potentials_backward(z, log_a, log_b, fs, gs, d_p, p):
    """Gradient of a loss w.r.t. ``z`` given its gradient ``d_p`` w.r.t. the plan."""
    w = d_p * p
    d_z = w.copy()
    d_f = w.sum(axis=-1)
    d_g_extra = w.sum(axis=-2)
    for k in range(len(gs), 0, -1):
        g_k, f_k, f_prev = gs[k - 1], fs[k], fs[k - 1]
        # f_k = log_a - lse_j(z + g_k)
        row_soft = np.exp(z + g_k[..., None, :] + f_k[..., :, None] - log_a[:, None])
        t = d_f[..., :, None] * row_soft
        d_z -= t
        d_g = d_g_extra - t.sum(axis=-2)
        d_g_extra = 0.0
        # g_k = log_b - lse_i(z + f_prev)
        col_soft = np.exp(z + f_prev[..., :, None] + g_k[..., None, :] - log_b[None, :])
        t = d_g[..., None, :] * col_soft
        d_z -= t
        d_f = -t.sum(axis=-1)
    return d_z


def _scaling_plan(z, a, b, iterations):
    """Kernel-scaling iterations on exp(z - max z); None if the kernel underflows."""
    shift = z.max(axis=(-2, -1), keepdims=True)
    k = np.exp(z - shift)
    if (k.sum(axis=-1) == 0).any() or (k.sum(axis=-2) == 0).any():
        return None
    u = np.ones(z.shape[:-1])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for _ in range(iterations):
            v = b / np.einsum("...ij,...i->...j", k, u)
            u = a / np.einsum("...ij,...j->...i", k, v)
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        return None
    return u[..., :, None] * k * v[..., None, :]


def solve(s_hat, a, b, cfg: OtConfig) -> np.ndarray:
    """Transport plan(s) for one or a batch of score matrices."""
    s_hat = np.asarray(s_hat, dtype=float)
    if not np.isfinite(s_hat).all():
        raise NumericError("non-finite entries in the augmented similarity matrix")
    z = s_hat / cfg.lam
    if not cfg.log_domain:
        p = _scaling_plan(z, a, b, cfg.iterations)
        if p is not None:
            return p
    log_a, log_b = np.log(a), np.log(b)
    fs, gs = log_potentials(z, log_a, log_b, cfg.iterations)
    return np.exp(z + fs[-1][..., :, None] + gs[-1][..., None, :])


def marginal_residual(p, a, b) -> float:
    return float(
        max(np.abs(p.sum(axis=-1) - a).max(), np.abs(p.sum(axis=-2) - b).max())
    )


def sinkhorn(aug: AugmentedSimilarity, cfg: OtConfig) -> TransportPlan:
    a, b = marginals(aug.m_q, aug.m_x)
    p = solve(aug.matrix, a, b, cfg)
    return TransportPlan(p, cfg.iterations, marginal_residual(p, a, b))


def sinkhorn_plain(s, cfg: OtConfig) -> TransportPlan:
    """OT on the bare similarity block with unit marginals (no dustbins)."""
    a, b = marginals(*np.shape(s), dustbin=False)
    p = solve(s, a, b, cfg)
    return TransportPlan(p, cfg.iterations, marginal_residual(p, a, b), dustbin=False)


def refined_block(plan: TransportPlan) -> np.ndarray:
    if plan.dustbin:
        return plan.p[:-1, :-1].copy()
    return plan.p.copy()


def scaled_votes(s, u, v, omega, cfg: OtConfig, overwrite: bool = False):
    """Row and column maxima of the refined block(s) via kernel scaling.

    Inference-only fast path: the dustbin row and column are kept as separate
    vectors, so the augmented matrix and the full plan are never formed.
    ``s`` is (B, Mq, Mx) in float32 or float64; ``u is None`` means plain OT.
    Returns None if the shifted kernel underflows, in which case callers fall
    back to the log-domain solver.
    """
    bsz, m, n = s.shape
    dt = s.dtype
    inv = dt.type(1.0 / cfg.lam)
    shift = s.max(axis=(1, 2))
    if u is not None:
        shift = np.maximum.reduce([shift, u.max(axis=-1), v.max(axis=-1), np.full(bsz, omega)])
    k = s if overwrite else s.copy()
    k -= shift.astype(dt)[:, None, None]
    k *= inv
    np.exp(k, out=k)
    r = np.ones((bsz, m), dtype=dt)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if u is None:
            for _ in range(cfg.iterations):
                c = 1.0 / (r[:, None, :] @ k)[:, 0, :]
                r = 1.0 / (k @ c[:, :, None])[:, :, 0]
        else:
            kc = np.exp((u - shift[:, None]) * inv).astype(dt)  # dustbin column
            kr = np.exp((v - shift[:, None]) * inv).astype(dt)  # dustbin row
            kw = np.exp((omega - shift) * inv).astype(dt)  # corner
            rd = np.ones(bsz, dtype=dt)
            for _ in range(cfg.iterations):
                c = 1.0 / ((r[:, None, :] @ k)[:, 0, :] + rd[:, None] * kr)
                cd = m / ((r * kc).sum(axis=-1) + rd * kw)
                r = 1.0 / ((k @ c[:, :, None])[:, :, 0] + kc * cd[:, None])
                rd = n / ((kr * c).sum(axis=-1) + kw * cd)
    if not (np.isfinite(r).all() and np.isfinite(c).all() and (r > 0).all() and (c > 0).all()):
        return None
    k *= c[:, None, :]
    rows = k.max(axis=-1) * r
    k *= r[:, :, None]
    cols = k.max(axis=-2)
    return rows.astype(np.float64), cols.astype(np.float64)
