"""Ground-truth trace binarization and the consistency-check baseline."""
from __future__ import annotations

import numpy as np

from .fdk import backproject_indicator
from .geometry import ScanGeometry
from .projector import project_metal_mask
from .stacks import LINE, ProjectionStack, TraceStack
from .volume import Grid, Mask3


def binarize_metal_projection(metal_only: ProjectionStack, eps: float = 0.01) -> TraceStack:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if metal_only.domain != LINE:
        raise ValueError("expected a line-integral projection stack")
    return TraceStack(metal_only.data > eps)


def support_volume(traces: TraceStack, g: ScanGeometry, grid: Grid, threads: int = 1) -> np.ndarray:
    """Number of views whose trace covers each voxel centre's projection."""
    return backproject_indicator(traces.data, g, grid, threads)


def consistency_check(traces: TraceStack, g: ScanGeometry, grid: Grid, tau: float = 0.9,
                      min_path_mm: float | None = None, threads: int = 1) -> tuple[TraceStack, Mask3]:
    """Keep only metal supported by at least ``tau * n_views`` views, then
    re-project it. Returns (refined traces, 3-D binary metal)."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    counts = support_volume(traces, g, grid, threads)
    metal = Mask3(grid, counts >= tau * g.n_views)
    refined = project_metal_mask(metal, g, min_path_mm, threads)
    return refined, metal


def mmar_refine(*_args, **_kwargs):
    """Moving-metal refinement; its algorithm is not available to this toolkit."""
    raise NotImplementedError("MMAR refinement is not implemented")
