"""Batched forward pass with recorded intermediates, and its exact reverse pass.

A batch holds ``B`` pairs that share descriptor counts: query descriptors
have shape (B, D', Mq) and candidate descriptors (B, D', Mx). Gradients flow
through the projection (linear, layer norm, l2), the dustbin head, the
unrolled log-domain Sinkhorn iterations, the max-selection of votes (only the
argmax entry receives gradient) and the vote function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..descriptors import ProjectionParams
from ..linalg import NORM_EPS, gelu, gelu_grad
from ..model import ModelParams
from ..transport import OtConfig, augment, log_potentials, marginals, potentials_backward


@dataclass
class _SideTrace:
    raw: np.ndarray
    xhat: np.ndarray | None
    rstd: np.ndarray | None
    y: np.ndarray
    norm: np.ndarray
    degenerate: np.ndarray
    n: np.ndarray
    head_pre: np.ndarray | None


@dataclass
class Trace:
    model: ModelParams
    cfg: OtConfig
    q: _SideTrace
    x: _SideTrace
    z: np.ndarray
    log_a: np.ndarray
    log_b: np.ndarray
    fs: list
    gs: list
    plan: np.ndarray
    row_arg: np.ndarray
    col_arg: np.ndarray
    row_cache: tuple | None
    col_cache: tuple | None
    row_votes: np.ndarray
    col_votes: np.ndarray
    scores: np.ndarray


def _project_forward(raw, proj: ProjectionParams | None):
    xhat = rstd = None
    if proj is None:
        y = raw
    else:
        z = np.einsum("ed,bdm->bem", proj.weight, raw) + proj.bias[:, None]
        centered = z - z.mean(axis=-2, keepdims=True)
        var = (centered * centered).mean(axis=-2, keepdims=True)
        rstd = 1.0 / np.sqrt(var + proj.eps)
        xhat = centered * rstd
        y = xhat * proj.ln_gain[:, None] + proj.ln_bias[:, None]
    norm = np.sqrt((y * y).sum(axis=-2, keepdims=True))
    degenerate = norm <= NORM_EPS
    n = np.where(degenerate, y, y / np.where(degenerate, 1.0, norm))
    return _SideTrace(raw, xhat, rstd, y, norm, degenerate, n, None)


def _project_backward(side: _SideTrace, d_n, proj: ProjectionParams | None, grads: ModelParams):
    safe_norm = np.where(side.degenerate, 1.0, side.norm)
    d_y = np.where(
        side.degenerate,
        d_n,
        (d_n - side.n * (d_n * side.n).sum(axis=-2, keepdims=True)) / safe_norm,
    )
    if proj is None:
        return
    g = grads.projection
    g.ln_gain += (d_y * side.xhat).sum(axis=(0, 2))
    g.ln_bias += d_y.sum(axis=(0, 2))
    d_xhat = d_y * proj.ln_gain[:, None]
    d_z = side.rstd * (
        d_xhat
        - d_xhat.mean(axis=-2, keepdims=True)
        - side.xhat * (d_xhat * side.xhat).mean(axis=-2, keepdims=True)
    )
    g.weight += np.einsum("bem,bdm->ed", d_z, side.raw)
    g.bias += d_z.sum(axis=(0, 2))


def _gains_forward(side: _SideTrace, model: ModelParams):
    if model.dustbin is not None:
        h = model.dustbin
        side.head_pre = np.einsum("ed,bdm->bem", h.w1, side.n) + h.b1[:, None]
        return np.einsum("e,bem->bm", h.w2, gelu(side.head_pre)) + h.b2
    if model.dustbin_gain is not None:
        return np.full((side.n.shape[0], side.n.shape[2]), float(model.dustbin_gain))
    return None


def _gains_backward(side: _SideTrace, d_gain, model: ModelParams, grads: ModelParams, d_n):
    if model.dustbin is not None:
        h, gh = model.dustbin, grads.dustbin
        act = gelu(side.head_pre)
        gh.w2 += np.einsum("bm,bem->e", d_gain, act)
        gh.b2 += d_gain.sum()
        d_pre = h.w2[:, None] * d_gain[:, None, :] * gelu_grad(side.head_pre)
        gh.w1 += np.einsum("bem,bdm->ed", d_pre, side.n)
        gh.b1 += d_pre.sum(axis=(0, 2))
        d_n += np.einsum("ed,bem->bdm", h.w1, d_pre)
    elif model.dustbin_gain is not None:
        grads.dustbin_gain += d_gain.sum()


def _strength_forward(votes, f):
    if f is None:
        return np.clip(votes, 0.0, 1.0), None
    return f.forward(votes)


def forward(model: ModelParams, cfg: OtConfig, q_raw, x_raw) -> Trace:
    q_raw = np.asarray(q_raw, dtype=float)
    x_raw = np.asarray(x_raw, dtype=float)
    q = _project_forward(q_raw, model.projection)
    x = _project_forward(x_raw, model.projection)
    s = np.einsum("bdi,bdj->bij", q.n, x.n)
    m, n = s.shape[-2:]
    u = _gains_forward(q, model)
    v = _gains_forward(x, model)
    if model.uses_dustbin:
        s_hat = augment(s, u, v, float(model.omega))
        a, b = marginals(m, n)
    else:
        s_hat = s
        a, b = marginals(m, n, dustbin=False)
    z = s_hat / cfg.lam
    log_a, log_b = np.log(a), np.log(b)
    fs, gs = log_potentials(z, log_a, log_b, cfg.iterations)
    plan = np.exp(z + fs[-1][..., :, None] + gs[-1][..., None, :])
    refined = plan[:, :m, :n]
    row_arg = refined.argmax(axis=-1)
    col_arg = refined.argmax(axis=-2)
    row_votes = np.take_along_axis(refined, row_arg[..., None], axis=-1)[..., 0]
    col_votes = np.take_along_axis(refined, col_arg[:, None, :], axis=-2)[:, 0, :]
    row_strength, row_cache = _strength_forward(row_votes, model.f)
    col_strength, col_cache = _strength_forward(col_votes, model.f)
    scores = row_strength.sum(axis=-1) + col_strength.sum(axis=-1)
    return Trace(
        model, cfg, q, x, z, log_a, log_b, fs, gs, plan, row_arg, col_arg,
        row_cache, col_cache, row_votes, col_votes, scores,
    )


def _strength_backward(votes, cache, d_out, f, grads: ModelParams):
    if f is None:
        # clamp passes gradient only strictly inside (0, 1)
        return np.where((votes > 0.0) & (votes < 1.0), d_out, 0.0)
    d_votes, g = f.backward(cache, d_out)
    for name, arr in grads.f.tensors().items():
        arr += g.tensors()[name]
    return d_votes


def backward(trace: Trace, d_scores) -> ModelParams:
    """Gradients of ``sum(d_scores * scores)`` w.r.t. every inference parameter."""
    model = trace.model
    grads = model.zeros_like()
    d_scores = np.asarray(d_scores, dtype=float)
    bsz, m, n = trace.plan.shape[0], trace.q.n.shape[-1], trace.x.n.shape[-1]
    d_each = np.broadcast_to(d_scores[:, None], (bsz, m))
    d_row = _strength_backward(trace.row_votes, trace.row_cache, d_each, model.f, grads)
    d_each = np.broadcast_to(d_scores[:, None], (bsz, n))
    d_col = _strength_backward(trace.col_votes, trace.col_cache, d_each, model.f, grads)

    d_plan = np.zeros_like(trace.plan)
    b_idx = np.arange(bsz)[:, None]
    np.add.at(d_plan, (b_idx, np.arange(m)[None, :], trace.row_arg), d_row)
    np.add.at(d_plan, (b_idx, trace.col_arg, np.arange(n)[None, :]), d_col)

    d_z = potentials_backward(trace.z, trace.log_a, trace.log_b, trace.fs, trace.gs, d_plan, trace.plan)
    d_s_hat = d_z / trace.cfg.lam
    d_s = d_s_hat[:, :m, :n]

    d_qn = np.einsum("bij,bdj->bdi", d_s, trace.x.n)
    d_xn = np.einsum("bij,bdi->bdj", d_s, trace.q.n)
    if model.uses_dustbin:
        grads.omega += d_s_hat[:, m, n].sum()
        _gains_backward(trace.q, d_s_hat[:, :m, n], model, grads, d_qn)
        _gains_backward(trace.x, d_s_hat[:, m, :n], model, grads, d_xn)
    _project_backward(trace.q, d_qn, model.projection, grads)
    _project_backward(trace.x, d_xn, model.projection, grads)
    return grads
