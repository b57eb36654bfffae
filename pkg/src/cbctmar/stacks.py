"""Per-view detector image stacks: projections and binary metal traces.

Data arrays are ``(n_views, nv, nu)`` with u fastest.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

RAW = 0   # accumulated energy, keV per pixel
LINE = 1  # line integrals after flat-field normalization


@dataclass(frozen=True, eq=False)
class ProjectionStack:
    data: np.ndarray
    angles: np.ndarray
    domain: int = LINE
    seed: int = 0
    photons_per_pixel: float | None = None
    flagged: np.ndarray | None = field(default=None)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"projection data must be 3-D (views, nv, nu), got {data.shape}")
        ang = np.asarray(self.angles, dtype=np.float64).ravel()
        if ang.size != data.shape[0]:
            raise ValueError(f"{ang.size} angles for {data.shape[0]} views")
        if not np.all(np.isfinite(data)):
            raise ValueError("projection data contains non-finite values")
        if self.domain not in (RAW, LINE):
            raise ValueError(f"unknown domain tag {self.domain}")
        if self.domain == RAW and data.min(initial=0.0) < 0:
            raise ValueError("raw detector energies must be nonnegative")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "angles", ang)

    @property
    def n_views(self) -> int:
        return self.data.shape[0]

    @property
    def nv(self) -> int:
        return self.data.shape[1]

    @property
    def nu(self) -> int:
        return self.data.shape[2]

    def with_data(self, data, domain=None) -> "ProjectionStack":
        return ProjectionStack(data, self.angles, self.domain if domain is None else domain,
                               self.seed, self.photons_per_pixel, None)


@dataclass(frozen=True, eq=False)
class TraceStack:
    data: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.data)
        if d.ndim != 3:
            raise ValueError(f"trace data must be 3-D (views, nv, nu), got {d.shape}")
        if d.dtype != np.uint8:
            if d.dtype != bool and not np.isin(d, (0, 1)).all():
                raise ValueError("trace values must be 0 or 1")
            d = d.astype(np.uint8)
        elif d.max(initial=0) > 1:
            raise ValueError("trace values must be 0 or 1")
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def empty_like(cls, p) -> "TraceStack":
        return cls(np.zeros(p.data.shape, dtype=np.uint8))


def check_detector(g, data: np.ndarray, what: str = "stack") -> None:
    if data.shape[1:] != (g.det_nv, g.det_nu) or data.shape[0] != g.n_views:
        raise ValueError(f"{what} shape {data.shape} does not match geometry "
                         f"({g.n_views}, {g.det_nv}, {g.det_nu})")


def parallel_map(fn, items, threads: int = 1):
    """Ordered map; kernels release the GIL so threads give real speedup."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
