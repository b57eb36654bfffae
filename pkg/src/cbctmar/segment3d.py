"""Image-domain metal segmentation: global threshold, seeded region growing,
3-D median filtering and binary dilation."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import _kernels
from .volume import Mask3, Volume3


def global_threshold(vol: Volume3, t_hu: float = 3400.0) -> Mask3:
    return Mask3(vol.grid, vol.data >= t_hu)


def region_grow_metal(vol: Volume3, seed_hu: float = 7000.0, grow_hu: float = 3000.0,
                      connectivity: int = 26) -> Mask3:
    """Connected components of {v > grow_hu} that contain a voxel > seed_hu."""
    if seed_hu < grow_hu:
        raise ValueError("seed_hu must be >= grow_hu")
    if connectivity not in (6, 26):
        raise ValueError("connectivity must be 6 or 26")
    bits = _kernels.region_grow(np.ascontiguousarray(vol.data), float(seed_hu), float(grow_hu),
                                int(connectivity))
    return Mask3(vol.grid, bits)


def median_filter3(mask: Mask3, radius: int = 1) -> Mask3:
    """Binary median over the (2r+1)^3 cube, zero outside the volume."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    out = ndimage.median_filter(mask.bits, size=2 * radius + 1, mode="constant", cval=0)
    return Mask3(mask.grid, out)


def dilate3(mask: Mask3, radius: int = 1) -> Mask3:
    """``radius`` dilations by the 3x3x3 structuring element."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    st = ndimage.generate_binary_structure(3, 3)
    out = ndimage.binary_dilation(mask.bits.astype(bool), structure=st, iterations=radius)
    return Mask3(mask.grid, out)
