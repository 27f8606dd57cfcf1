"""Scalar-to-scalar MLP with one GELU hidden layer and a sigmoid output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import gelu, gelu_grad, sigmoid


@dataclass
class ScalarMLP:
    w1: np.ndarray  # (H,)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: np.ndarray  # ()

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def init(cls, hidden: int, rng: np.random.Generator, input_scale: float = 1.0, increasing: bool = False):
        """Random weights; ``increasing`` draws both weight layers nonnegative.

        The increasing start is only an initialization, training may bend the
        function any way it likes. ``input_scale`` rescales the first layer
        for inputs that are not O(1).
        """
        lo = 0.0 if increasing else -1.0
        return cls(
            w1=rng.uniform(lo, 1.0, size=hidden) / input_scale,
            b1=rng.uniform(-1.0, 1.0, size=hidden),
            w2=rng.uniform(lo, 1.0, size=hidden) / np.sqrt(hidden),
            b2=np.array(0.0),
        )

    @classmethod
    def zeros(cls, hidden: int):
        return cls(np.zeros(hidden), np.zeros(hidden), np.zeros(hidden), np.array(0.0))

    def __call__(self, x):
        return self.forward(x)[0]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        pre = x[..., None] * self.w1 + self.b1
        act = gelu(pre)
        out = sigmoid(act @ self.w2 + self.b2)
        return out, (x, pre, act, out)

    def backward(self, cache, d_out):
        """Return (gradient w.r.t. the input, parameter gradients) for upstream ``d_out``."""
        x, pre, act, out = cache
        d_logit = np.asarray(d_out, dtype=float) * out * (1.0 - out)
        d_act = d_logit[..., None] * self.w2
        d_pre = d_act * gelu_grad(pre)
        grads = type(self)(
            w1=(d_pre * x[..., None]).reshape(-1, self.hidden).sum(axis=0),
            b1=d_pre.reshape(-1, self.hidden).sum(axis=0),
            w2=(d_logit[..., None] * act).reshape(-1, self.hidden).sum(axis=0),
            b2=np.array(d_logit.sum()),
        )
        d_x = d_pre @ self.w1
        return d_x, grads

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
