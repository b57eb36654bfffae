"""FDK reconstruction for full circular scans: cosine weighting, row-wise
Ram-Lak filtering and voxel-driven weighted backprojection."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .geometry import ScanGeometry
from .stacks import LINE, ProjectionStack, check_detector, parallel_map
from .volume import Grid, Volume3


def _require_line(p: ProjectionStack) -> None:
    if p.domain != LINE:
        raise ValueError("expected a line-integral projection stack")


def cosine_weights(g: ScanGeometry) -> np.ndarray:
    """(nv, nu) factors sdd / sqrt(sdd^2 + u^2 + v^2)."""
    u = g.u_offsets()[None, :]
    v = g.v_offsets()[:, None]
    return g.sdd_mm / np.sqrt(g.sdd_mm ** 2 + u ** 2 + v ** 2)


def cosine_weight(p: ProjectionStack, g: ScanGeometry) -> ProjectionStack:
    _require_line(p)
    check_detector(g, p.data, "projections")
    return p.with_data(p.data * cosine_weights(g)[None])


def ramlak_kernel(n: np.ndarray, du: float) -> np.ndarray:
    """Band-limited ramp: 1/(4 du^2) at 0, -1/(pi n du)^2 at odd n, 0 at even n."""
    n = np.asarray(n)
    h = np.zeros(n.shape)
    h[n == 0] = 1.0 / (4.0 * du * du)
    odd = (n % 2) == 1
    h[odd] = -1.0 / (np.pi * n[odd] * du) ** 2
    return h


def filter_rows(rows: np.ndarray, du: float) -> np.ndarray:
    """du * (h * row) along the last axis, linear convolution via FFT with
    zero padding to the next power of two >= 2 * length."""
    nu = rows.shape[-1]
    L = 1 << int(np.ceil(np.log2(2 * nu)))
    n = np.arange(L)
    n = np.where(n < L // 2, n, n - L)  # circular layout of lags -L/2..L/2-1
    H = np.fft.rfft(ramlak_kernel(np.abs(n), du))
    out = np.fft.irfft(np.fft.rfft(rows, n=L, axis=-1) * H, n=L, axis=-1)[..., :nu]
    return du * out


def virtual_pitch(g: ScanGeometry) -> float:
    """Detector pitch scaled to the isocentre plane."""
    return g.pitch_u_mm * g.sid_mm / g.sdd_mm


def ramp_filter(p: ProjectionStack, g: ScanGeometry) -> ProjectionStack:
    _require_line(p)
    check_detector(g, p.data, "projections")
    return p.with_data(filter_rows(p.data, virtual_pitch(g)))


def backproject(pf: ProjectionStack, g: ScanGeometry, grid: Grid, threads: int = 1) -> Volume3:
    """(dtheta/2) * sum over views of (sid/U)^2 * pf(u(x), v(x)), bilinear on the detector.

    dtheta is the mean angular step over the full circle. Work is split into
    z slabs, so the per-voxel accumulation order never changes.
    """
    check_detector(g, pf.data, "filtered projections")
    dtheta = 2 * np.pi / g.n_views
    vol = _backproject_slabs(pf.data, g, grid, True, threads)
    return Volume3(grid, vol * (dtheta / 2.0))


def _backproject_slabs(data, g, grid, weighted, threads):
    nx, ny, nz = grid.dims
    n_slab = max(1, min(nz, threads))
    bounds = np.linspace(0, nz, n_slab + 1).astype(int)

    def slab(i):
        z0, z1 = bounds[i], bounds[i + 1]
        org = (grid.origin[0], grid.origin[1], grid.origin[2] + z0 * grid.spacing[2])
        return _kernels.backproject(np.ascontiguousarray(data, dtype=np.float64), g.angles,
                                    g.sid_mm, g.sdd_mm, g.pitch_u_mm, g.pitch_v_mm,
                                    (nx, ny, int(z1 - z0)), org, grid.spacing, weighted)

    return np.concatenate(parallel_map(slab, range(n_slab), threads), axis=0)


def backproject_indicator(data: np.ndarray, g: ScanGeometry, grid: Grid, threads: int = 1) -> np.ndarray:
    """Unweighted nearest-pixel backprojection (counts views that see a voxel in ``data``)."""
    check_detector(g, data, "traces")
    return _backproject_slabs(np.asarray(data, dtype=np.float64), g, grid, False, threads)


def fdk_reconstruct(p: ProjectionStack, g: ScanGeometry, grid: Grid, threads: int = 1) -> Volume3:
    """Attenuation volume (1/mm)."""
    return backproject(ramp_filter(cosine_weight(p, g), g), g, grid, threads)


def mu_to_hu(vol: Volume3, mu_water: float) -> Volume3:
    if mu_water <= 0:
        raise ValueError("mu_water must be positive")
    return vol.with_data(1000.0 * (vol.data - mu_water) / mu_water)


def hu_to_mu(vol: Volume3, mu_water: float) -> Volume3:
    return vol.with_data(mu_water * (1.0 + vol.data / 1000.0))
