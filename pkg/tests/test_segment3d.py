import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbctmar import _kernels
from cbctmar.segment3d import dilate3, global_threshold, median_filter3, region_grow_metal
from cbctmar.volume import Grid, Mask3, Volume3

from oracles import flood_fill

G = Grid.centered((9, 9, 9), 1.0)


def test_global_threshold():
    v = Volume3(G, np.full(G.shape, 3400.0))
    assert global_threshold(v, 3400).count == G.size
    assert global_threshold(v, 1e9).count == 0
    r = np.random.default_rng(0).uniform(0, 9000, G.shape)
    a, b = global_threshold(Volume3(G, r), 3000).bits, global_threshold(Volume3(G, r), 6000).bits
    assert not (b & ~a).any()


def test_region_grow_examples(each_backend):
    d = np.full(G.shape, 3500.0)
    d[0, 0, 0] = 0
    assert region_grow_metal(Volume3(G, d)).count == 0
    d = np.zeros(G.shape)
    d[3:6, 3:6, 3:6] = 3500.0
    d[4, 4, 4] = 8000.0
    m = region_grow_metal(Volume3(G, d)).bits
    assert m.sum() == 27 and m[3:6, 3:6, 3:6].all()
    d = d.copy()
    d[0:2, 0:2, 0:2] = 4000.0
    d[0, 0, 0] = 5000.0
    m = region_grow_metal(Volume3(G, d)).bits
    assert m.sum() == 27 and not m[0:2, 0:2, 0:2].any()
    with pytest.raises(ValueError):
        region_grow_metal(Volume3(G, d), 1000, 3000)


def test_region_grow_strict_inequality(each_backend):
    d = np.zeros(G.shape)
    d[4, 4, 4] = 7000.0
    d[4, 4, 5] = 3000.0
    assert region_grow_metal(Volume3(G, d)).count == 0
    d = d.copy()
    d[4, 4, 4] = 7000.5
    np.testing.assert_array_equal(np.argwhere(region_grow_metal(Volume3(G, d)).bits), [[4, 4, 4]])


def test_connectivity_choice(each_backend):
    d = np.zeros(G.shape)
    d[4, 4, 4] = 8000.0
    d[5, 5, 5] = 4000.0  # corner neighbour only
    assert region_grow_metal(Volume3(G, d), connectivity=26).count == 2
    assert region_grow_metal(Volume3(G, d), connectivity=6).count == 1


@given(st.integers(0, 2 ** 31), st.sampled_from([6, 26]))
def test_region_grow_matches_flood_fill(seed, conn):
    r = np.random.default_rng(seed)
    grid = Grid.centered((12, 10, 8), 1.0)
    vol = r.choice([0.0, 3500.0, 8000.0], size=grid.shape, p=[0.45, 0.5, 0.05])
    ref = flood_fill(vol, 7000, 3000, conn)
    for name in _kernels.available():
        with _kernels.use_backend(name):
            np.testing.assert_array_equal(region_grow_metal(Volume3(grid, vol), connectivity=conn).bits, ref)


def test_median_and_dilation_kernels():
    ones = Mask3(G, np.ones(G.shape, np.uint8))
    med = median_filter3(ones).bits
    # zero padding: only voxels on an edge line or corner of the volume lose the vote
    on_face = (np.indices(G.shape) == 0) | (np.indices(G.shape) == 8)
    interior_or_face = on_face.sum(axis=0) <= 1
    assert med[interior_or_face].all()
    assert dilate3(ones).count == G.size
    one = np.zeros(G.shape, np.uint8)
    one[4, 4, 4] = 1
    assert median_filter3(Mask3(G, one)).count == 0
    dil = dilate3(Mask3(G, one)).bits
    assert dil.sum() == 27 and dil[3:6, 3:6, 3:6].all()
    assert dilate3(Mask3(G, one), 2).count == 125
    with pytest.raises(ValueError):
        dilate3(Mask3(G, one), 0)


@given(st.integers(0, 2 ** 31))
def test_morphology_properties(seed):
    r = np.random.default_rng(seed)
    a = r.random(G.shape) < 0.3
    b = a | (r.random(G.shape) < 0.2)
    ma, mb = Mask3(G, a), Mask3(G, b)
    assert not (a & ~dilate3(ma).bits.astype(bool)).any()
    assert not (dilate3(ma).bits & ~dilate3(mb).bits).any()
    assert not (median_filter3(ma).bits & ~median_filter3(mb).bits).any()
