"""AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimState:
    lr_peak: float = 5e-4
    total_steps: int = 1
    warmup_steps: int = 0
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_run(cls, total_steps: int, lr_peak: float = 5e-4, warmup_fraction: float = 0.1, **kw):
        warmup = int(round(warmup_fraction * total_steps))
        return cls(lr_peak=lr_peak, total_steps=total_steps, warmup_steps=warmup, **kw)


def cosine_lr(step: int, state: OptimState) -> float:
    """Linear warmup to ``lr_peak`` then half-cosine decay to zero at ``total_steps``."""
    if not 0 <= step <= state.total_steps:
        raise ValueError(f"step {step} outside [0, {state.total_steps}]")
    if step < state.warmup_steps:
        return state.lr_peak * step / state.warmup_steps
    span = state.total_steps - state.warmup_steps
    if span <= 0:
        return state.lr_peak
    progress = (step - state.warmup_steps) / span
    return state.lr_peak * 0.5 * (1.0 + math.cos(math.pi * progress))


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimState) -> float:
    """Update ``params`` in place and advance ``state``; returns the learning rate used.

    The learning rate for update ``t`` (1-based) is the schedule at ``t``, so
    the first update after a warmup of zero length already uses ``lr_peak``.
    """
    state.step += 1
    t = state.step
    lr = cosine_lr(min(t, state.total_steps), state)
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.first_moment.setdefault(name, np.zeros_like(p))
        v = state.second_moment.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p *= 1.0 - lr * state.weight_decay
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return lr
