"""Voxel volumes, material classes and procedural phantoms.

Arrays are stored as ``(nz, ny, nx)`` in C order, so x runs fastest in
memory, matching the file formats. ``dims`` is always reported as
``(nx, ny, nz)``. ``origin`` is the centre of voxel (0, 0, 0) in mm
relative to the isocentre.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np


class Material(IntEnum):
    AIR = 0
    SOFT_TISSUE = 1
    BONE = 2
    METAL = 3


# lower HU bounds of SoftTissue, Bone and Metal
MATERIAL_THRESHOLDS = (-500.0, 500.0, 3400.0)

HU_SOFT_TISSUE = 40.0
HU_BONE = 1200.0
HU_TITANIUM = 8000.0
HU_STEEL = 20000.0


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        if len(origin) != 3 or not np.all(np.isfinite(origin)):
            raise ValueError(f"origin must be three finite values, got {self.origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, dims, spacing) -> "Grid":
        """Grid whose geometric centre sits on the isocentre."""
        if np.isscalar(spacing):
            spacing = (spacing,) * 3
        origin = tuple(-(int(n) - 1) / 2.0 * float(s) for n, s in zip(dims, spacing))
        return cls(tuple(dims), tuple(spacing), origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def lo(self) -> np.ndarray:
        """Corner of the grid's bounding box (voxel faces, not centres)."""
        return np.asarray(self.origin) - 0.5 * np.asarray(self.spacing)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + np.asarray(self.dims) * np.asarray(self.spacing)

    def axis(self, a: int) -> np.ndarray:
        """Voxel-centre coordinates along axis ``a`` (0=x, 1=y, 2=z)."""
        return self.origin[a] + np.arange(self.dims[a]) * self.spacing[a]

    def centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable (z, y, x) centre coordinate arrays in array order."""
        z = self.axis(2)[:, None, None]
        y = self.axis(1)[None, :, None]
        x = self.axis(0)[None, None, :]
        return z, y, x

    def extended(self, dims, spacing=None) -> "Grid":
        """A larger grid with the same centre (used for out-of-FOV scenes)."""
        spacing = self.spacing if spacing is None else spacing
        c = 0.5 * (self.lo + self.hi)
        g = Grid.centered(dims, spacing)
        return Grid(g.dims, g.spacing, tuple(np.asarray(g.origin) + c))


def _check_shape(grid: Grid, arr: np.ndarray, what: str) -> None:
    if arr.shape != grid.shape:
        raise ValueError(f"{what} shape {arr.shape} does not match grid {grid.shape}")


@dataclass(frozen=True, eq=False)
class Volume3:
    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        _check_shape(self.grid, data, "volume")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dims(self):
        return self.grid.dims

    def with_data(self, data) -> "Volume3":
        return Volume3(self.grid, data)


@dataclass(frozen=True, eq=False)
class Mask3:
    grid: Grid
    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits)
        _check_shape(self.grid, bits, "mask")
        if bits.dtype != np.uint8:
            if bits.dtype != bool and not np.isin(bits, (0, 1)).all():
                raise ValueError("mask values must be 0 or 1")
            bits = bits.astype(np.uint8)
        elif bits.max(initial=0) > 1:
            raise ValueError("mask values must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, grid: Grid) -> "Mask3":
        return cls(grid, np.zeros(grid.shape, dtype=np.uint8))

    @property
    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class MaterialVolume:
    grid: Grid
    labels: np.ndarray

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        _check_shape(self.grid, labels, "label volume")
        if labels.max(initial=0) > Material.METAL:
            raise ValueError("labels must lie in {0, 1, 2, 3}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


def segment_materials(vol: Volume3) -> MaterialVolume:
    """Air / soft tissue / bone / metal by fixed HU thresholds (lower bound inclusive)."""
    labels = np.digitize(vol.data, MATERIAL_THRESHOLDS, right=False).astype(np.uint8)
    return MaterialVolume(vol.grid, labels)


def _same_grid(a: Grid, b: Grid, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: dims {b.dims} do not match {a.dims}")


def insert_metal(vol: Volume3, metal: Mask3, hu_values: Volume3) -> Volume3:
    _same_grid(vol.grid, metal.grid, "insert_metal mask")
    _same_grid(vol.grid, hu_values.grid, "insert_metal values")
    out = np.where(metal.bits.astype(bool), hu_values.data, vol.data)
    return vol.with_data(out)


def remove_metal(vol: Volume3, metal: Mask3, fill_hu: float = HU_SOFT_TISSUE) -> Volume3:
    _same_grid(vol.grid, metal.grid, "remove_metal mask")
    return vol.with_data(np.where(metal.bits.astype(bool), fill_hu, vol.data))


def clip_metal_min(vol: Volume3, metal: Mask3, floor_hu: float = 3400.0) -> Volume3:
    _same_grid(vol.grid, metal.grid, "clip_metal_min mask")
    m = metal.bits.astype(bool)
    return vol.with_data(np.where(m, np.maximum(vol.data, floor_hu), vol.data))


# ------------------------------------------------------------- phantoms

def _rot_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _local(z, y, x, center, angle_deg):
    """Coordinates in a primitive's frame (rotated about z by angle)."""
    R = _rot_z(angle_deg)
    dx, dy, dz = x - center[0], y - center[1], z - center[2]
    lx = R[0, 0] * dx + R[1, 0] * dy
    ly = R[0, 1] * dx + R[1, 1] * dy
    return lx, ly, dz


@dataclass(frozen=True)
class Primitive:
    hu: float
    center: tuple[float, float, float]

    def _check(self, *sizes):
        if min(sizes) <= 0:
            raise ValueError(f"{type(self).__name__}: sizes must be positive")

    def shifted(self, offset) -> "Primitive":
        c = tuple(float(a) + float(b) for a, b in zip(self.center, offset))
        return replace(self, center=c)

    def contains(self, z, y, x) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Sphere(Primitive):
    radius: float = 1.0

    def __post_init__(self):
        self._check(self.radius)

    def contains(self, z, y, x):
        c = self.center
        return (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 <= self.radius ** 2


@dataclass(frozen=True)
class EllipticCylinder(Primitive):
    """Axis along z; semi-axes (rx, ry) in the frame rotated by ``angle_deg``."""
    rx: float = 1.0
    ry: float = 1.0
    half_height: float = 1.0
    angle_deg: float = 0.0

    def __post_init__(self):
        self._check(self.rx, self.ry, self.half_height)

    def contains(self, z, y, x):
        lx, ly, lz = _local(z, y, x, self.center, self.angle_deg)
        return ((lx / self.rx) ** 2 + (ly / self.ry) ** 2 <= 1.0) & (np.abs(lz) <= self.half_height)


@dataclass(frozen=True)
class Box(Primitive):
    half_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    angle_deg: float = 0.0

    def __post_init__(self):
        self._check(*self.half_size)

    def contains(self, z, y, x):
        lx, ly, lz = _local(z, y, x, self.center, self.angle_deg)
        h = self.half_size
        return (np.abs(lx) <= h[0]) & (np.abs(ly) <= h[1]) & (np.abs(lz) <= h[2])


@dataclass(frozen=True)
class CappedCylinder(Primitive):
    """Cylinder of ``radius`` around a segment with hemispherical caps
    (screw/pin-like). ``axis`` need not be normalized."""
    radius: float = 1.0
    half_length: float = 1.0
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        self._check(self.radius, self.half_length, float(np.linalg.norm(self.axis)))

    def contains(self, z, y, x):
        a = np.asarray(self.axis, dtype=float)
        a = a / np.linalg.norm(a)
        c = self.center
        dx, dy, dz = x - c[0], y - c[1], z - c[2]
        t = np.clip(dx * a[0] + dy * a[1] + dz * a[2], -self.half_length, self.half_length)
        return (dx - t * a[0]) ** 2 + (dy - t * a[1]) ** 2 + (dz - t * a[2]) ** 2 <= self.radius ** 2


@dataclass(frozen=True)
class PhantomSpec:
    body: tuple = ()
    metal_inserts: tuple = ()
    out_of_fov_offset_mm: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        object.__setattr__(self, "metal_inserts", tuple(self.metal_inserts))
        for m in self.metal_inserts:
            if m.hu < MATERIAL_THRESHOLDS[2]:
                raise ValueError(f"metal insert HU {m.hu} below {MATERIAL_THRESHOLDS[2]}")

    def placed_metal(self) -> tuple:
        """Metal inserts with the out-of-FOV offset applied."""
        if self.out_of_fov_offset_mm is None:
            return self.metal_inserts
        return tuple(m.shifted(self.out_of_fov_offset_mm) for m in self.metal_inserts)

    def without_metal(self) -> "PhantomSpec":
        return PhantomSpec(self.body, (), None)


def merge_specs(a: PhantomSpec, b: PhantomSpec) -> PhantomSpec:
    """Body of ``a`` with the (placed) metal inserts of both."""
    return PhantomSpec(a.body, a.placed_metal() + b.placed_metal(), None)


def rasterize_phantom(spec: PhantomSpec, grid: Grid) -> Volume3:
    """Voxel-centre inclusion; later primitives overwrite earlier ones,
    metal inserts are drawn after the body."""
    z, y, x = grid.centers()
    data = np.full(grid.shape, -1000.0)
    for p in spec.body:
        data[np.broadcast_to(p.contains(z, y, x), grid.shape)] = p.hu
    covered = np.zeros(grid.shape, dtype=bool)
    for p in spec.placed_metal():
        inside = np.broadcast_to(p.contains(z, y, x), grid.shape)
        if (inside & covered).any():
            warnings.warn("overlapping metal inserts; the later one wins", stacklevel=2)
        data[inside] = p.hu
        covered |= inside
    return Volume3(grid, data)


def metal_mask_of(spec: PhantomSpec, grid: Grid) -> Mask3:
    z, y, x = grid.centers()
    bits = np.zeros(grid.shape, dtype=bool)
    for p in spec.placed_metal():
        bits |= np.broadcast_to(p.contains(z, y, x), grid.shape)
    return Mask3(grid, bits)


__all__ = [
    "Material", "MATERIAL_THRESHOLDS", "Grid", "Volume3", "Mask3", "MaterialVolume",
    "segment_materials", "insert_metal", "remove_metal", "clip_metal_min",
    "Primitive", "Sphere", "EllipticCylinder", "Box", "CappedCylinder", "PhantomSpec",
    "merge_specs", "rasterize_phantom", "metal_mask_of",
    "HU_SOFT_TISSUE", "HU_BONE", "HU_TITANIUM", "HU_STEEL",
]
