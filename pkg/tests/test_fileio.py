import struct

import numpy as np
import pytest

from cbctmar import fileio
from cbctmar.fileio import FormatError
from cbctmar.nn.unet import UNet
from cbctmar.stacks import ProjectionStack, TraceStack
from cbctmar.volume import Grid, Mask3, Volume3

GRID = Grid.centered((5, 4, 3), (1.5, 1.25, 2.0))


def samples(rng):
    vol = Volume3(GRID, rng.normal(0, 500, GRID.shape).astype(np.float32))
    msk = Mask3(GRID, rng.random(GRID.shape) > 0.5)
    prj = ProjectionStack(rng.random((4, 3, 6)).astype(np.float32), np.linspace(0, 3, 4).astype(np.float32),
                          seed=2 ** 63 + 5)
    trc = TraceStack(rng.random((4, 3, 6)) > 0.3)
    net = UNet(2, 3, np.float32).init(7)
    return dict(pvol=vol, pmsk=msk, pprj=prj, ptrc=trc, pnet=net)


@pytest.mark.parametrize("kind", ["pvol", "pmsk", "pprj", "ptrc", "pnet"])
def test_roundtrip_is_bit_identical(kind, tmp_path, rng):
    obj = samples(rng)[kind]
    a, b = tmp_path / f"a.{kind}", tmp_path / f"b.{kind}"
    getattr(fileio, f"write_{kind}")(a, obj)
    back = fileio.read_any(a)
    getattr(fileio, f"write_{kind}")(b, back)
    assert a.read_bytes() == b.read_bytes()


def test_roundtrip_payloads(tmp_path, rng):
    s = samples(rng)
    fileio.write_pprj(tmp_path / "p", s["pprj"])
    p = fileio.read_pprj(tmp_path / "p")
    np.testing.assert_array_equal(p.data, s["pprj"].data)
    np.testing.assert_array_equal(p.angles, s["pprj"].angles)
    assert p.seed == s["pprj"].seed and p.domain == s["pprj"].domain
    fileio.write_pvol(tmp_path / "v", s["pvol"])
    v = fileio.read_pvol(tmp_path / "v")
    np.testing.assert_array_equal(v.data, s["pvol"].data)
    assert v.grid.dims == GRID.dims
    np.testing.assert_allclose(v.grid.origin, GRID.origin)
    fileio.write_pnet(tmp_path / "n", s["pnet"])
    net = fileio.read_pnet(tmp_path / "n", np.float64)
    for x, y in zip(net.params, s["pnet"].params):
        np.testing.assert_array_equal(x, y)
    assert (net.depth, net.base_channels) == (2, 3)


def test_errors_name_byte_offsets(tmp_path, rng):
    s = samples(rng)
    path = tmp_path / "v.pvol"
    fileio.write_pvol(path, s["pvol"])
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(FormatError, match="byte offset 44"):
        fileio.read_pvol(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        fileio.read_pvol(path)
    path.write_bytes(b"PVOX" + raw[4:])
    with pytest.raises(FormatError, match="byte offset 0"):
        fileio.read_pvol(path)
    path.write_bytes(raw[:4] + struct.pack("<I", 9) + raw[8:])
    with pytest.raises(FormatError, match="byte offset 4.*version"):
        fileio.read_pvol(path)
    bad = bytearray(raw)
    bad[44:48] = struct.pack("<f", np.nan)
    path.write_bytes(bytes(bad))
    with pytest.raises(FormatError, match="byte offset"):
        fileio.read_pvol(path)
    m = tmp_path / "m.pmsk"
    fileio.write_pmsk(m, s["pmsk"])
    bad = bytearray(m.read_bytes())
    bad[-1] = 7
    m.write_bytes(bytes(bad))
    with pytest.raises(FormatError, match="byte offset"):
        fileio.read_pmsk(m)
    with pytest.raises(FormatError, match="magic"):
        fileio.read_pvol(m)
    unknown = tmp_path / "x.bin"
    unknown.write_bytes(b"ABCD1234")
    with pytest.raises(FormatError):
        fileio.read_any(unknown)

