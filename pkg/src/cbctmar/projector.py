"""Ray-driven forward projection with exact voxel traversal."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .geometry import Ray, ScanGeometry
from .stacks import LINE, ProjectionStack, TraceStack, parallel_map
from .volume import Grid, Mask3


def siddon_trace(grid: Grid, ray: Ray, t_max: float = np.inf) -> tuple[np.ndarray, np.ndarray]:
    """(flat voxel indices, chord lengths in mm) along ``ray`` in visiting order.

    Flat indices are x-fastest, i.e. they index ``volume.ravel()``.
    """
    return _kernels.trace_ray(ray.origin, ray.direction, float(min(t_max, 1e30)),
                              grid.dims, grid.lo, grid.spacing)


def _view_integrals(values: np.ndarray, grid: Grid, g: ScanGeometry, view: int) -> np.ndarray:
    o, d, dist = g.view_rays(view)
    out = _kernels.project_values(o, d, dist, values, grid.lo, grid.spacing)
    return out.reshape(g.det_nv, g.det_nu)


def forward_project_array(values: np.ndarray, grid: Grid, g: ScanGeometry, threads: int = 1) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ValueError(f"volume shape {values.shape} does not match grid {grid.shape}")
    views = parallel_map(lambda v: _view_integrals(values, grid, g, v), range(g.n_views), threads)
    return np.stack(views)


def forward_project_values(vol, g: ScanGeometry, threads: int = 1) -> ProjectionStack:
    """Line integrals of a volume interpreted as attenuation (1/mm)."""
    return ProjectionStack(forward_project_array(vol.data, vol.grid, g, threads), g.angles, LINE)


def label_paths(labels: np.ndarray, n_labels: int, grid: Grid, g: ScanGeometry, view: int) -> np.ndarray:
    """Path length per label for every pixel of one view, (nv*nu, n_labels)."""
    o, d, dist = g.view_rays(view)
    return _kernels.project_labels(o, d, dist, np.ascontiguousarray(labels, dtype=np.uint8),
                                   n_labels, grid.lo, grid.spacing)


def project_metal_mask(mask: Mask3, g: ScanGeometry, min_path_mm: float | None = None,
                       threads: int = 1) -> TraceStack:
    """Trace pixel = 1 where the ray's path through the mask exceeds ``min_path_mm``
    (default: half the smallest voxel spacing)."""
    if min_path_mm is None:
        min_path_mm = 0.5 * min(mask.grid.spacing)
    if min_path_mm < 0:
        raise ValueError("min_path_mm must be >= 0")
    path = forward_project_array(mask.bits.astype(np.float64), mask.grid, g, threads)
    return TraceStack(path > min_path_mm)
