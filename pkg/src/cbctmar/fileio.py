"""Binary file formats (all little-endian).

PVOL  magic, u32 version=1, u32 nx ny nz, f32 spacing[3], f32 origin[3],
      f32 data (x fastest)
PMSK  same header as PVOL with magic "PMSK", then one byte (0/1) per voxel
PPRJ  magic, u32 version=1, u32 n_views nu nv, u8 domain (0 raw, 1 line),
      u64 seed, f32 angle per view, f32 data (u fastest)
PTRC  magic, u32 n_views nu nv, one byte (0/1) per pixel
PNET  magic, u32 version=1, u32 depth, u32 base_channels, f64 parameters in
      ``UNet.conv_layers`` order (weights (out, in, k, k) then bias, per layer)

Readers raise :class:`FormatError` naming the byte offset of the problem.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .nn.unet import UNet
from .stacks import LINE, RAW, ProjectionStack, TraceStack
from .volume import Grid, Mask3, Volume3

VERSION = 1


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf, self.pos, self.path = buf, 0, path

    def fail(self, msg: str, offset: int | None = None):
        off = self.pos if offset is None else offset
        raise FormatError(f"{self.path}: byte offset {off}: {msg}")

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            self.fail(f"file truncated while reading {what} (need {n} bytes, {len(self.buf) - self.pos} left)")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str, what: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt).copy()

    def magic(self, expected: bytes):
        got = self.take(4, "magic")
        if got != expected:
            self.fail(f"bad magic {got!r}, expected {expected!r}", 0)

    def version(self):
        off = self.pos
        (v,) = self.unpack("I", "version")
        if v != VERSION:
            self.fail(f"unsupported version {v}", off)

    def end(self):
        if self.pos != len(self.buf):
            self.fail(f"{len(self.buf) - self.pos} trailing bytes")


def _read(path) -> _Reader:
    with open(path, "rb") as f:
        return _Reader(f.read(), os.fspath(path))


def _write(path, parts) -> None:
    with open(path, "wb") as f:
        for p in parts:
            f.write(p)


def _f32(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _u8_bits(a, what: str) -> bytes:
    a = np.ascontiguousarray(a)
    if a.max(initial=0) > 1 or a.min(initial=0) < 0:
        raise ValueError(f"{what} must be binary")
    return a.astype(np.uint8).tobytes()


# ------------------------------------------------------------------ volumes

def _grid_header(magic: bytes, grid: Grid) -> bytes:
    return magic + struct.pack("<4I", VERSION, *grid.dims) + struct.pack("<6f", *grid.spacing, *grid.origin)


def _read_grid(r: _Reader) -> Grid:
    r.version()
    off = r.pos
    dims = r.unpack("3I", "dims")
    sp_off = r.pos
    vals = r.unpack("6f", "spacing/origin")
    if min(dims) < 1:
        r.fail(f"dims must be positive, got {dims}", off)
    if min(vals[:3]) <= 0 or not np.all(np.isfinite(vals)):
        r.fail(f"invalid spacing/origin {vals}", sp_off)
    return Grid(dims, vals[:3], vals[3:])


def write_pvol(path, vol: Volume3) -> None:
    _write(path, [_grid_header(b"PVOL", vol.grid), _f32(vol.data)])


def read_pvol(path) -> Volume3:
    r = _read(path)
    r.magic(b"PVOL")
    grid = _read_grid(r)
    off = r.pos
    data = r.array("f4", grid.size, "voxel data")
    if not np.all(np.isfinite(data)):
        r.fail("non-finite voxel value", off + 4 * int(np.argmin(np.isfinite(data))))
    r.end()
    return Volume3(grid, data.astype(np.float64).reshape(grid.shape))


def write_pmsk(path, mask: Mask3) -> None:
    _write(path, [_grid_header(b"PMSK", mask.grid), _u8_bits(mask.bits, "mask")])


def read_pmsk(path) -> Mask3:
    r = _read(path)
    r.magic(b"PMSK")
    grid = _read_grid(r)
    off = r.pos
    bits = r.array("u1", grid.size, "mask bytes")
    if bits.max(initial=0) > 1:
        r.fail("mask byte is not 0/1", off + int(np.argmax(bits > 1)))
    r.end()
    return Mask3(grid, bits.reshape(grid.shape))


# -------------------------------------------------------------- projections

def write_pprj(path, p: ProjectionStack) -> None:
    head = b"PPRJ" + struct.pack("<4I", VERSION, p.n_views, p.nu, p.nv) + struct.pack("<BQ", p.domain, p.seed)
    _write(path, [head, _f32(p.angles), _f32(p.data)])


def read_pprj(path) -> ProjectionStack:
    r = _read(path)
    r.magic(b"PPRJ")
    r.version()
    off = r.pos
    nviews, nu, nv = r.unpack("3I", "dimensions")
    if min(nviews, nu, nv) < 1:
        r.fail(f"dimensions must be positive, got {(nviews, nu, nv)}", off)
    off = r.pos
    (domain,) = r.unpack("B", "domain tag")
    if domain not in (RAW, LINE):
        r.fail(f"unknown domain tag {domain}", off)
    (seed,) = r.unpack("Q", "seed")
    angles = r.array("f4", nviews, "angles").astype(np.float64)
    off = r.pos
    data = r.array("f4", nviews * nu * nv, "projection data")
    if not np.all(np.isfinite(data)):
        r.fail("non-finite projection value", off + 4 * int(np.argmin(np.isfinite(data))))
    r.end()
    return ProjectionStack(data.astype(np.float64).reshape(nviews, nv, nu), angles, domain, seed)


def write_ptrc(path, t: TraceStack) -> None:
    n, nv, nu = t.shape
    _write(path, [b"PTRC" + struct.pack("<3I", n, nu, nv), _u8_bits(t.data, "trace")])


def read_ptrc(path) -> TraceStack:
    r = _read(path)
    r.magic(b"PTRC")
    off = r.pos
    n, nu, nv = r.unpack("3I", "dimensions")
    if min(n, nu, nv) < 1:
        r.fail(f"dimensions must be positive, got {(n, nu, nv)}", off)
    off = r.pos
    bits = r.array("u1", n * nu * nv, "trace bytes")
    if bits.max(initial=0) > 1:
        r.fail("trace byte is not 0/1", off + int(np.argmax(bits > 1)))
    r.end()
    return TraceStack(bits.reshape(n, nv, nu))


# -------------------------------------------------------------------- models

def write_pnet(path, net: UNet) -> None:
    head = b"PNET" + struct.pack("<3I", VERSION, net.depth, net.base_channels)
    _write(path, [head] + [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params])


def read_pnet(path, dtype=np.float32) -> UNet:
    """Load a model; parameters are cast to ``dtype`` for inference."""
    r = _read(path)
    r.magic(b"PNET")
    r.version()
    off = r.pos
    depth, base = r.unpack("2I", "depth/base_channels")
    if not 1 <= depth <= 8 or not 1 <= base <= 1024:
        r.fail(f"implausible depth/base_channels {depth}/{base}", off)
    net = UNet(depth, base, np.float64)
    arrays = []
    for p in net.params:
        off = r.pos
        a = r.array("f8", p.size, f"parameter array of shape {p.shape}")
        if not np.all(np.isfinite(a)):
            r.fail("non-finite parameter", off)
        arrays.append(a.reshape(p.shape))
    r.end()
    out = UNet(depth, base, dtype)
    out.set_params(arrays)
    return out


READERS = {b"PVOL": read_pvol, b"PMSK": read_pmsk, b"PPRJ": read_pprj, b"PTRC": read_ptrc, b"PNET": read_pnet}


def read_any(path):
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic not in READERS:
        raise FormatError(f"{os.fspath(path)}: byte offset 0: unknown magic {magic!r}")
    return READERS[magic](path)
