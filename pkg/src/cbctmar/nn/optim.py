"""Adam optimizer and the log-linear learning-rate schedule."""
from __future__ import annotations

import math

import numpy as np


class Adam:
    def __init__(self, params, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros(p.shape, dtype=np.float64) for p in self.params]
        self.v = [np.zeros(p.shape, dtype=np.float64) for p in self.params]
        self.t = 0

    def step(self, grads, lr: float) -> None:
        """In-place update of every parameter from ``grads`` (same order)."""
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v, strict=True):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * np.square(g, dtype=np.float64)
            p -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}


def lr_schedule(epoch: int, lr_start: float = 1e-4, lr_end: float = 1e-6,
                decay_epochs: int = 25) -> float:
    """Geometric interpolation from ``lr_start`` to ``lr_end`` over
    ``decay_epochs`` epochs, constant afterwards."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch >= decay_epochs:
        return lr_end
    a, b = math.log10(lr_start), math.log10(lr_end)
    return 10.0 ** (a + (epoch / decay_epochs) * (b - a))
