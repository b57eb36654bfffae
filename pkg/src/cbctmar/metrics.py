"""Confusion counts and overlap / false-positive metrics.

Undefined ratios (zero denominator) are returned as NaN and written as
``n/a`` in reports; they are never silently turned into 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


def _data(x):
    return np.asarray(getattr(x, "data", x)).astype(bool)


def confusion(pred, gt) -> Confusion:
    p, g = _data(pred), _data(gt)
    if p.shape != g.shape:
        raise ValueError(f"prediction {p.shape} and ground truth {g.shape} differ")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return Confusion(tp, fp, fn, p.size - tp - fp - fn)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def dsc(c: Confusion) -> float:
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


def iou(c: Confusion) -> float:
    return _ratio(c.tp, c.tp + c.fp + c.fn)


def fpr(c: Confusion) -> float:
    """FP / TN, the form used in the evaluation protocol (may exceed 1)."""
    return _ratio(c.fp, c.tn)


def fpr_conventional(c: Confusion) -> float:
    """FP / (FP + TN)."""
    return _ratio(c.fp, c.fp + c.tn)


def summarize(scores) -> tuple[float, float]:
    """(mean, standard error); the standard error is NaN for a single score."""
    x = np.asarray(list(scores), dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot summarize an empty list")
    if x.size == 1:
        return float(x[0]), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def per_view_scores(pred, gt, metric=dsc) -> list[float]:
    """Optional per-view variant (metrics from each view's own confusion)."""
    p, g = _data(pred), _data(gt)
    return [metric(confusion(p[v], g[v])) for v in range(p.shape[0])]


def fmt(x: float, digits: int = 6) -> str:
    return "n/a" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"
