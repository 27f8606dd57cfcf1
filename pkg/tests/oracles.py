"""Slow, obviously-correct references the tests compare against."""

import math

import numpy as np


def naive_matmul_tl(q, x):
    d, m = q.shape
    n = x.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                acc += q[k, i] * x[k, j]
            out[i, j] = acc
    return out


def naive_sinkhorn(s_hat, a, b, lam, tol=1e-12, max_iter=500_000):
    """Plain kernel-scaling fixed point run until both marginals are within ``tol``."""
    k = np.exp((s_hat - s_hat.max()) / lam)
    u = np.ones(len(a))
    for it in range(1, max_iter + 1):
        v = b / (k.T @ u)
        u = a / (k @ v)
        p = u[:, None] * k * v[None, :]
        if it % 10 == 0 or it == 1:
            if max(abs(p.sum(1) - a).max(), abs(p.sum(0) - b).max()) < tol:
                return p, it
    return p, max_iter


def naive_chamfer(q, x):
    s = naive_matmul_tl(q, x)
    m, n = s.shape
    rows = sum(max(s[i, j] for j in range(n)) for i in range(m))
    cols = sum(max(s[i, j] for i in range(m)) for j in range(n))
    return rows + cols


def naive_layer_norm(v, gain, bias, eps):
    n = len(v)
    mean = sum(v) / n
    var = sum((t - mean) ** 2 for t in v) / n
    return [gain[i] * (v[i] - mean) / math.sqrt(var + eps) + bias[i] for i in range(n)]


def naive_ap_at_k(ranked, positives, k=None):
    positives = set(positives)
    cut = ranked if k is None else ranked[:k]
    precisions = [
        sum(c in positives for c in cut[: r + 1]) / (r + 1)
        for r in range(len(cut)) if cut[r] in positives
    ]
    denom = len(positives) if k is None else min(len(positives), k)
    return sum(precisions) / denom


def central_difference(fn, arr, h=1e-5):
    """d fn / d arr by perturbing ``arr`` in place, entry by entry."""
    grad = np.zeros_like(arr, dtype=float)
    flat = arr.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fn()
        flat[i] = old - h
        down = fn()
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return grad
