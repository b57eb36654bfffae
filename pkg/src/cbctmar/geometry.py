"""Circular cone-beam geometry.

World frame: isocentre at the origin, rotation axis +z. At view angle
theta the source sits at ``sid * (-cos theta, -sin theta, 0)`` (angle 0 puts
it on -x). The flat detector is perpendicular to the central ray at
distance ``sdd`` from the source; its u axis is the in-plane tangent
``(-sin theta, cos theta, 0)`` and its v axis is +z. Pixel (u, v) has its
centre at offset ``((u + 0.5) - nu/2) * pitch_u`` along u, likewise for v.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def uniform_angles(n_views: int, arc_rad: float = 2 * np.pi) -> np.ndarray:
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    return np.arange(n_views) * (arc_rad / n_views)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("ray direction must be a unit vector")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True, eq=False)
class ScanGeometry:
    sdd_mm: float = 580.0
    sid_mm: float = 392.0
    det_nu: int = 128
    det_nv: int = 96
    pitch_u_mm: float = 1.9
    pitch_v_mm: float = 1.9
    angles_rad: tuple = tuple(uniform_angles(60))
    kvp: float = 90.0

    def __post_init__(self):
        if not 0 < self.sid_mm < self.sdd_mm:
            raise ValueError(f"need 0 < sid ({self.sid_mm}) < sdd ({self.sdd_mm})")
        if self.det_nu < 1 or self.det_nv < 1:
            raise ValueError("detector dimensions must be positive")
        if self.pitch_u_mm <= 0 or self.pitch_v_mm <= 0:
            raise ValueError("detector pitch must be positive")
        ang = np.asarray(self.angles_rad, dtype=np.float64).ravel()
        if ang.size < 1 or not np.all(np.isfinite(ang)):
            raise ValueError("angles must be a non-empty finite array")
        if not 40.0 <= self.kvp <= 150.0:
            raise ValueError(f"kvp {self.kvp} outside [40, 150]")
        object.__setattr__(self, "angles_rad", tuple(float(a) for a in ang))
        object.__setattr__(self, "det_nu", int(self.det_nu))
        object.__setattr__(self, "det_nv", int(self.det_nv))

    @classmethod
    def circular(cls, n_views: int = 60, arc_rad: float = 2 * np.pi, **kw) -> "ScanGeometry":
        return cls(angles_rad=tuple(uniform_angles(n_views, arc_rad)), **kw)

    @property
    def n_views(self) -> int:
        return len(self.angles_rad)

    @property
    def angles(self) -> np.ndarray:
        return np.asarray(self.angles_rad)

    @property
    def magnification(self) -> float:
        return self.sdd_mm / self.sid_mm

    def with_views(self, angles) -> "ScanGeometry":
        return ScanGeometry(self.sdd_mm, self.sid_mm, self.det_nu, self.det_nv,
                            self.pitch_u_mm, self.pitch_v_mm, tuple(angles), self.kvp)

    def _check_view(self, view: int) -> None:
        if not 0 <= view < self.n_views:
            raise IndexError(f"view {view} out of range [0, {self.n_views})")

    def basis(self, view: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(central direction, u axis, v axis) unit vectors."""
        self._check_view(view)
        th = self.angles_rad[view]
        c, s = np.cos(th), np.sin(th)
        return np.array([c, s, 0.0]), np.array([-s, c, 0.0]), np.array([0.0, 0.0, 1.0])

    def source_position(self, view: int) -> np.ndarray:
        ec, _, _ = self.basis(view)
        return -self.sid_mm * ec

    def detector_center(self, view: int) -> np.ndarray:
        ec, _, _ = self.basis(view)
        return (self.sdd_mm - self.sid_mm) * ec

    def u_offsets(self) -> np.ndarray:
        return ((np.arange(self.det_nu) + 0.5) - self.det_nu / 2.0) * self.pitch_u_mm

    def v_offsets(self) -> np.ndarray:
        return ((np.arange(self.det_nv) + 0.5) - self.det_nv / 2.0) * self.pitch_v_mm

    def detector_pixel_center(self, view: int, u: int, v: int) -> np.ndarray:
        if not (0 <= u < self.det_nu and 0 <= v < self.det_nv):
            raise IndexError(f"pixel ({u}, {v}) outside {self.det_nu}x{self.det_nv} detector")
        _, eu, ev = self.basis(view)
        return self.detector_center(view) + self.u_offsets()[u] * eu + self.v_offsets()[v] * ev

    def pixel_ray(self, view: int, u: int, v: int) -> Ray:
        s = self.source_position(view)
        d = self.detector_pixel_center(view, u, v) - s
        return Ray(s, d / np.linalg.norm(d))

    def view_rays(self, view: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All pixel rays of one view, u fastest: (origins, unit dirs, source-pixel distances)."""
        _, eu, ev = self.basis(view)
        s = self.source_position(view)
        vv, uu = np.meshgrid(self.v_offsets(), self.u_offsets(), indexing="ij")
        pix = self.detector_center(view) + uu.reshape(-1, 1) * eu + vv.reshape(-1, 1) * ev
        d = pix - s
        dist = np.sqrt((d * d).sum(axis=1))
        origins = np.broadcast_to(s, d.shape).copy()
        return origins, d / dist[:, None], dist
