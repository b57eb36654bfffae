import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbctmar.volume import (HU_BONE, HU_SOFT_TISSUE, HU_STEEL, HU_TITANIUM, Box, CappedCylinder,
                            EllipticCylinder, Grid, Mask3, Material, PhantomSpec, Sphere, Volume3,
                            clip_metal_min, insert_metal, merge_specs, metal_mask_of, rasterize_phantom,
                            remove_metal, segment_materials)

GRID = Grid.centered((8, 6, 4), 1.5)


def vol_of(values):
    return Volume3(GRID, np.full(GRID.shape, float(values)))


def test_grid_layout():
    g = Grid.centered((5, 4, 3), (1.0, 2.0, 3.0))
    assert g.shape == (3, 4, 5)
    assert g.size == 60
    np.testing.assert_allclose(g.origin, (-2.0, -3.0, -3.0))
    np.testing.assert_allclose(g.lo, (-2.5, -4.0, -4.5))
    np.testing.assert_allclose(g.hi, (2.5, 4.0, 4.5))
    with pytest.raises(ValueError):
        Grid((0, 1, 1), (1, 1, 1), (0, 0, 0))
    with pytest.raises(ValueError):
        Grid((1, 1, 1), (1, -1, 1), (0, 0, 0))


def test_volume_validation():
    with pytest.raises(ValueError):
        Volume3(GRID, np.zeros((2, 2, 2)))
    bad = np.zeros(GRID.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        Volume3(GRID, bad)
    with pytest.raises(ValueError):
        Mask3(GRID, np.full(GRID.shape, 2))


@pytest.mark.parametrize("hu,label", [(-600, Material.AIR), (-500, Material.SOFT_TISSUE),
                                      (499, Material.SOFT_TISSUE), (500, Material.BONE),
                                      (3399.99, Material.BONE), (3400, Material.METAL),
                                      (-1000, Material.AIR), (20000, Material.METAL)])
def test_segment_materials_thresholds(hu, label):
    assert (segment_materials(vol_of(hu)).labels == label).all()


@given(st.lists(st.floats(-3000, 30000, allow_nan=False), min_size=GRID.size, max_size=GRID.size))
def test_segmentation_partitions_and_is_idempotent(vals):
    v = Volume3(GRID, np.array(vals).reshape(GRID.shape))
    lab = segment_materials(v).labels
    assert set(np.unique(lab)) <= {0, 1, 2, 3}
    rep = np.array([-1000.0, HU_SOFT_TISSUE, HU_BONE, HU_TITANIUM])[lab]
    np.testing.assert_array_equal(segment_materials(Volume3(GRID, rep)).labels, lab)


def test_rasterize_empty_and_sphere_volume():
    empty = rasterize_phantom(PhantomSpec(), GRID)
    assert (empty.data == -1000).all()
    g = Grid.centered((25, 25, 25), 1.0)
    sph = rasterize_phantom(PhantomSpec([Sphere(0.0, (0.0, 0.0, 0.0), radius=10.0)]), g)
    n = int((sph.data == 0).sum())
    assert abs(n - 4 / 3 * np.pi * 1000) <= 0.05 * 4 / 3 * np.pi * 1000


def test_rasterize_voxel_centre_rule_and_overwrite_order():
    g = Grid.centered((11, 11, 1), 1.0)
    spec = PhantomSpec([Box(100.0, (0, 0, 0), half_size=(3.0, 3.0, 1.0)),
                        Sphere(200.0, (0, 0, 0), radius=1.0)])
    d = rasterize_phantom(spec, g).data[0]
    z, y, x = g.centers()
    in_box = (abs(x) <= 3) & (abs(y) <= 3)
    in_sph = (x ** 2 + y ** 2) <= 1.0
    exp = np.where(in_sph, 200.0, np.where(in_box, 100.0, -1000.0))[0]
    np.testing.assert_array_equal(d, exp)


def test_out_of_fov_metal_leaves_grid_unchanged():
    body = [EllipticCylinder(HU_SOFT_TISSUE, (0, 0, 0), rx=5, ry=5, half_height=10)]
    metal = [Box(HU_STEEL, (0, 0, 0), half_size=(2, 2, 2))]
    with_m = PhantomSpec(body, metal, out_of_fov_offset_mm=(0.0, 0.0, 100.0))
    np.testing.assert_array_equal(rasterize_phantom(with_m, GRID).data,
                                  rasterize_phantom(PhantomSpec(body), GRID).data)
    assert metal_mask_of(with_m, GRID).count == 0
    big = Grid.centered((8, 6, 160), 1.5)
    assert metal_mask_of(with_m, big).count > 0


def test_metal_inserts_need_metal_hu():
    with pytest.raises(ValueError):
        PhantomSpec([], [Sphere(3000.0, (0, 0, 0), radius=2)])


def test_overlapping_metal_warns():
    spec = PhantomSpec([], [Sphere(HU_TITANIUM, (0, 0, 0), radius=2), Sphere(HU_STEEL, (0, 0, 0), radius=2)])
    with pytest.warns(UserWarning):
        rasterize_phantom(spec, GRID)


def test_merge_specs_unions_metal():
    a = PhantomSpec([Sphere(0.0, (0, 0, 0), radius=3)], [Sphere(HU_TITANIUM, (1, 0, 0), radius=1)])
    b = PhantomSpec([], [Sphere(HU_STEEL, (-1, 0, 0), radius=1)])
    m = merge_specs(a, b)
    assert len(m.metal_inserts) == 2 and m.body == a.body


def test_capped_cylinder_membership():
    c = CappedCylinder(HU_TITANIUM, (0, 0, 0), radius=1.0, half_length=3.0, axis=(0, 0, 2.0))
    z = np.array([0.0, 3.9, 4.1, 0.0])
    x = np.array([0.9, 0.0, 0.0, 1.1])
    np.testing.assert_array_equal(c.contains(z, np.zeros(4), x), [True, True, False, False])


def test_insert_remove_clip():
    rng = np.random.default_rng(0)
    base = Volume3(GRID, rng.uniform(-1000, 2000, GRID.shape))
    hu = Volume3(GRID, rng.uniform(3000, 9000, GRID.shape))
    empty = Mask3.empty(GRID)
    np.testing.assert_array_equal(insert_metal(base, empty, hu).data, base.data)
    full = Mask3(GRID, np.ones(GRID.shape, np.uint8))
    np.testing.assert_array_equal(insert_metal(base, full, hu).data, hu.data)
    m = Mask3(GRID, rng.random(GRID.shape) < 0.3)
    ins = insert_metal(base, m, hu)
    out = m.bits == 0
    np.testing.assert_array_equal(ins.data[out], base.data[out])
    rem = remove_metal(ins, m)
    np.testing.assert_array_equal(rem.data[out], base.data[out])
    assert (rem.data[~out] == HU_SOFT_TISSUE).all()
    with pytest.raises(ValueError):
        insert_metal(base, Mask3.empty(Grid.centered((2, 2, 2), 1.0)), hu)


def test_clip_metal_min_examples():
    data = np.full(GRID.shape, 2000.0)
    data[0, 0, 1] = 9000.0
    bits = np.zeros(GRID.shape, np.uint8)
    bits[0, 0, :2] = 1
    out = clip_metal_min(Volume3(GRID, data), Mask3(GRID, bits)).data
    assert out[0, 0, 0] == 3400.0
    assert out[0, 0, 1] == 9000.0
    assert out[0, 0, 2] == 2000.0
    assert (out[bits == 0] == data[bits == 0]).all()
