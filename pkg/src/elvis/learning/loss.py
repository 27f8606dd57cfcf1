"""Binary cross-entropy on a learned warp of the pair score."""

from __future__ import annotations

import numpy as np

from ..linalg import sigmoid
from ..model import WarpFunction

LOG_CLAMP = 1e-12


def _bce(prob, labels):
    """Loss and d loss / d prob, with the log argument clamped at ``LOG_CLAMP``."""
    labels = np.asarray(labels, dtype=float)
    target = np.where(labels > 0, prob, 1.0 - prob)
    clamped = target < LOG_CLAMP
    loss = -np.log(np.maximum(target, LOG_CLAMP))
    d_target = np.where(clamped, 0.0, -1.0 / np.maximum(target, LOG_CLAMP))
    d_prob = np.where(labels > 0, d_target, -d_target)
    return loss, d_prob


def warped_bce(score, label, g: WarpFunction | None, tau: float = 1.0):
    """Per-pair loss, its derivative w.r.t. the score, and gradients of ``g``.

    Scalars or equal-shape arrays are accepted for ``score`` and ``label``.
    With ``g=None`` the probability is ``sigmoid(score / tau)``.
    """
    score = np.asarray(score, dtype=float)
    if g is None:
        prob = sigmoid(score / tau)
        loss, d_prob = _bce(prob, label)
        return loss, d_prob * prob * (1.0 - prob) / tau, None
    prob, cache = g.forward(score)
    loss, d_prob = _bce(prob, label)
    d_score, g_grads = g.backward(cache, d_prob)
    return loss, d_score, g_grads
