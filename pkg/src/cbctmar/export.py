"""8-bit PNG previews: axial slices with a fixed HU window, projections
min-max scaled, binary masks as 0/255."""
from __future__ import annotations

import numpy as np
from PIL import Image

from .stacks import ProjectionStack, TraceStack
from .volume import Mask3, Volume3

HU_WINDOW = (-1000.0, 3000.0)


def window_to_u8(img: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        raise ValueError("window needs hi > lo")
    x = (np.asarray(img, dtype=np.float64) - lo) / (hi - lo)
    return np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def minmax_to_u8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return np.zeros(img.shape, dtype=np.uint8)
    return window_to_u8(img, lo, hi)


def _index(n: int, index: int | None, what: str) -> int:
    k = n // 2 if index is None else index
    if not 0 <= k < n:
        raise IndexError(f"{what} {k} outside [0, {n})")
    return k


def to_image(obj, index: int | None = None) -> np.ndarray:
    """The 8-bit preview of one axial slice (volumes, masks) or one view (stacks)."""
    if isinstance(obj, Volume3):
        return window_to_u8(obj.data[_index(obj.data.shape[0], index, "slice")], *HU_WINDOW)
    if isinstance(obj, Mask3):
        return obj.bits[_index(obj.bits.shape[0], index, "slice")] * np.uint8(255)
    if isinstance(obj, ProjectionStack):
        return minmax_to_u8(obj.data[_index(obj.n_views, index, "view")])
    if isinstance(obj, TraceStack):
        return obj.data[_index(obj.shape[0], index, "view")] * np.uint8(255)
    raise TypeError(f"cannot export {type(obj).__name__}")


def save_png(path, img_u8: np.ndarray) -> None:
    # y grows downwards in image rows; flip so +y points up
    Image.fromarray(np.ascontiguousarray(img_u8[::-1], dtype=np.uint8)).save(path, format="PNG")
