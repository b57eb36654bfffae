"""Trace inpainting and the inpaint -> reconstruct -> reinsert MAR chain."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .fdk import fdk_reconstruct, mu_to_hu
from .geometry import ScanGeometry
from .stacks import ProjectionStack, TraceStack, check_detector, parallel_map
from .volume import Grid, Mask3, Volume3, insert_metal

HARMONIC_TOL = 1e-6
HARMONIC_MAX_SWEEPS = 10_000


def _linear_fill(img: np.ndarray, hole: np.ndarray) -> np.ndarray:
    """Row-wise linear interpolation across holes; rows with no known pixel
    are filled column-wise from the row result."""
    out = img.copy()
    cols = np.arange(img.shape[1])
    empty_rows = []
    for i in range(img.shape[0]):
        h = hole[i]
        if not h.any():
            continue
        if h.all():
            empty_rows.append(i)
            continue
        out[i, h] = np.interp(cols[h], cols[~h], img[i, ~h])
    if empty_rows:
        rows = np.arange(img.shape[0])
        known = np.setdiff1d(rows, empty_rows)
        for j in range(img.shape[1]):
            out[empty_rows, j] = np.interp(empty_rows, known, out[known, j])
    return out


def inpaint_trace(view: np.ndarray, trace: np.ndarray, method: str = "harmonic",
                  tol: float = HARMONIC_TOL, max_sweeps: int = HARMONIC_MAX_SWEEPS) -> np.ndarray:
    """Replace trace pixels; everything else is returned bit-exactly.

    ``harmonic``: discrete Laplace equation on the trace with the surrounding
    pixels as boundary values (Gauss-Seidel from a row-linear start).
    ``linear``: row-wise linear interpolation only.
    """
    view = np.asarray(view, dtype=np.float64)
    hole = np.asarray(trace).astype(bool)
    if view.shape != hole.shape:
        raise ValueError(f"view {view.shape} and trace {hole.shape} differ")
    if not hole.any():
        return view.copy()
    if hole.all():
        raise ValueError("trace covers the whole view; nothing to interpolate from")
    start = _linear_fill(view, hole)
    if method == "linear":
        return start
    if method != "harmonic":
        raise ValueError(f"unknown inpainting method {method!r}")
    out, _, _ = _kernels.inpaint_harmonic(start, hole.astype(np.uint8), float(tol), int(max_sweeps))
    out[~hole] = view[~hole]
    return out


def inpaint_projections(p: ProjectionStack, traces: TraceStack, method: str = "harmonic",
                        threads: int = 1) -> ProjectionStack:
    if traces.shape != p.data.shape:
        raise ValueError(f"traces {traces.shape} do not match projections {p.data.shape}")
    views = parallel_map(lambda v: inpaint_trace(p.data[v], traces.data[v], method),
                         range(p.n_views), threads)
    return p.with_data(np.stack(views))


def mar_pipeline(p: ProjectionStack, traces: TraceStack, g: ScanGeometry, grid: Grid, metal3d: Mask3,
                 metal_hu: Volume3, mu_water: float, method: str = "harmonic",
                 threads: int = 1) -> Volume3:
    """Inpaint every view, reconstruct in HU and put the metal back."""
    check_detector(g, p.data, "projections")
    pi = inpaint_projections(p, traces, method, threads)
    recon = mu_to_hu(fdk_reconstruct(pi, g, grid, threads), mu_water)
    return insert_metal(recon, metal3d, metal_hu)
