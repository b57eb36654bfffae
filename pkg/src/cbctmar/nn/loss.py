"""Binary cross-entropy on logits."""
from __future__ import annotations

import numpy as np


def sigmoid(x):
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_loss(logits: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient with respect to ``logits``.

    Uses ``max(x, 0) - x*y + log1p(exp(-|x|))`` per pixel, which equals
    ``-[y log s(x) + (1-y) log(1-s(x))]`` without overflow. The mean runs over
    every element (batch x height x width).
    """
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch {logits.shape} vs {target.shape}")
    y = np.asarray(target)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("target must be binary (0/1)")
    x = logits.astype(np.float64, copy=False)
    y = y.astype(np.float64)
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    n = x.size
    grad = (sigmoid(x) - y) / n
    return float(per.sum() / n), grad.astype(logits.dtype, copy=False)
