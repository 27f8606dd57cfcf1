"""Dense array primitives shared by every stage of the model.

All functions accept scalars or numpy arrays and operate elementwise unless
noted. Column-wise helpers treat axis -2 as the feature axis so that a stack
of descriptor matrices with shape ``(..., D, M)`` is handled directly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc, expit

SQRT2 = np.sqrt(2.0)
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
NORM_EPS = 1e-12


class ShapeError(ValueError):
    """Raised when operand dimensions are incompatible."""


def matmul_transposed_left(q, x):
    """Return ``q.T @ x`` for ``q`` of shape (..., D, Mq) and ``x`` of shape (..., D, Mx)."""
    q = np.asarray(q)
    x = np.asarray(x)
    if q.ndim < 2 or x.ndim < 2 or q.shape[-2] != x.shape[-2]:
        raise ShapeError(
            f"descriptor dims differ: {q.shape} vs {x.shape} (need matching axis -2)"
        )
    return np.swapaxes(q, -1, -2) @ x


def gelu(x):
    """Exact GELU, x * Phi(x); erfc keeps the far negative tail from cancelling to 0."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * erfc(-x / SQRT2)


def gelu_grad(x):
    x = np.asarray(x, dtype=float)
    cdf = 0.5 * erfc(-x / SQRT2)
    pdf = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def sigmoid(x):
    # expit saturates to exactly 0/1 without overflow warnings
    return expit(np.asarray(x, dtype=float))


def layer_norm(v, gain, bias, eps=1e-5, axis=-1):
    """Normalize ``v`` along ``axis`` with population variance, then scale and shift.

    ``gain`` and ``bias`` must broadcast against ``v`` along ``axis``.
    """
    v = np.asarray(v, dtype=float)
    mean = v.mean(axis=axis, keepdims=True)
    centered = v - mean
    var = (centered * centered).mean(axis=axis, keepdims=True)
    denom = np.sqrt(var + eps)
    # eps == 0 on a constant vector: keep the zero numerator, avoid 0/0
    normed = np.divide(centered, denom, out=np.zeros_like(centered), where=denom > 0)
    return normed * gain + bias


def l2_normalize(v, axis=-1):
    """Scale ``v`` to unit norm along ``axis``.

    Returns ``(normalized, degenerate)`` where ``degenerate`` marks slices whose
    norm was below ``NORM_EPS``; those slices are returned unchanged.
    """
    v = np.asarray(v, dtype=float)
    norm = np.sqrt((v * v).sum(axis=axis, keepdims=True))
    degenerate = norm <= NORM_EPS
    out = np.where(degenerate, v, v / np.where(degenerate, 1.0, norm))
    return out, np.squeeze(degenerate, axis=axis)
