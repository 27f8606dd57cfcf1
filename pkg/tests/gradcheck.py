"""Shared finite-difference check of the full model gradient."""

import numpy as np

from elvis.learning import autodiff
from elvis.model import Ablation, ModelParams
from elvis.transport import OtConfig

from oracles import central_difference


def random_instance(seed, ablation="none", dim=4, in_dim=6, m=3, batch=2):
    rng = np.random.default_rng(seed)
    model = ModelParams.init(in_dim, dim, rng, Ablation.from_name(ablation), score_scale=2 * m)
    if model.omega is not None:
        model.omega[...] = rng.uniform(0.5, 1.5)
    q = rng.standard_normal((batch, in_dim, m))
    x = rng.standard_normal(q.shape)
    weights = rng.standard_normal(batch)
    return model, q, x, weights


def gradient_errors(model, q, x, weights, cfg=OtConfig(0.1, 2), h=1e-5, floor=1e-7):
    """(largest relative error among entries off by more than ``floor``, largest absolute error,
    largest relative error among entries with gradient magnitude above 1e-4)."""

    def objective():
        return float(weights @ autodiff.forward(model, cfg, q, x).scores)

    grads = autodiff.backward(autodiff.forward(model, cfg, q, x), weights).named_tensors(include_warp=False)
    worst = worst_abs = worst_big = 0.0
    for name, arr in model.named_tensors(include_warp=False).items():
        num = central_difference(objective, arr, h)
        diff = np.abs(grads[name] - num)
        scale = np.maximum(np.abs(grads[name]), np.abs(num))
        rel = np.where(diff > floor, diff / np.maximum(scale, 1e-300), 0.0)
        worst = max(worst, float(rel.max()))
        worst_abs = max(worst_abs, float(diff.max()))
        big = scale > 1e-4
        if big.any():
            worst_big = max(worst_big, float((diff[big] / scale[big]).max()))
    return worst, worst_abs, worst_big


def worst_gradient_error(*args, **kw):
    return gradient_errors(*args, **kw)[0]
