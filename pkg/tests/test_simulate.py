import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbctmar.attenuation import (ENERGY_GRID_KEV, Spectrum, build_spectrum, compton_energy, default_table,
                                 mu_lookup, mu_water)
from cbctmar.geometry import ScanGeometry
from cbctmar.simulate import (flat_field, floor_energy, normalize_log, simulate_line_integrals, simulate_mc,
                              simulate_primary)
from cbctmar.stacks import LINE, RAW, ProjectionStack
from cbctmar.volume import Grid, Material, MaterialVolume

from oracles import cylinder_chords

TABLE = default_table()


def test_spectrum_examples():
    one = build_spectrum(90, 1)
    assert one.weights.tolist() == [1.0]
    # mean energy of the (90 - E) E shape on [20, 90]
    e = np.linspace(20, 90, 200001)
    w = (90 - e) * e
    assert one.energies_kev[0] == pytest.approx(np.trapezoid(w * e, e) / np.trapezoid(w, e), rel=1e-9)
    for kvp in (90, 92, 96):
        s = build_spectrum(kvp, 8)
        assert s.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert (s.energies_kev < kvp).all() and (s.energies_kev >= 20).all()
    with pytest.raises(ValueError):
        build_spectrum(30, 4)
    with pytest.raises(ValueError):
        Spectrum(np.array([50.0, 40.0]), np.array([0.5, 0.5]))


@given(st.floats(40, 150), st.integers(1, 16))
def test_spectrum_mean_matches_shape(kvp, n):
    s = build_spectrum(kvp, n)
    e = np.linspace(20, kvp, 20001)
    w = (kvp - e) * e
    assert s.mean_energy == pytest.approx(np.trapezoid(w * e, e) / np.trapezoid(w, e), rel=1e-6)


def test_table_invariants():
    assert (TABLE.mu >= 0).all()
    assert (np.diff(TABLE.mu, axis=1) <= 0).all()
    assert ENERGY_GRID_KEV[0] == 20 and ENERGY_GRID_KEV[-1] == 150 and ENERGY_GRID_KEV.size == 10
    for m in Material:
        assert mu_lookup(TABLE, m, 50.0) == TABLE.mu[m, 3]
        mid = mu_lookup(TABLE, m, 55.0)
        assert mid == pytest.approx(0.5 * (TABLE.mu[m, 3] + TABLE.mu[m, 4]), rel=1e-14)
    v = [mu_lookup(TABLE, m, 60.0) for m in (Material.METAL, Material.BONE, Material.SOFT_TISSUE, Material.AIR)]
    assert v[0] > v[1] > v[2] > v[3]
    with pytest.raises(ValueError):
        mu_lookup(TABLE, Material.BONE, 10.0)
    assert (TABLE.compton_frac >= 0).all()


def test_compton_energy():
    assert compton_energy(60.0, 0.0) == pytest.approx(60 / (1 + 60 / 510.99895), rel=1e-12)
    assert compton_energy(60.0, 0.0) == pytest.approx(53.695, abs=0.001)
    assert compton_energy(60.0, 1.0) == 60.0


def water_cylinder_labels(grid, radius):
    z, y, x = grid.centers()
    lab = np.where(x ** 2 + y ** 2 <= radius ** 2, Material.SOFT_TISSUE, Material.AIR) + 0 * z
    return MaterialVolume(grid, lab.astype(np.uint8))


def test_beer_lambert_on_central_rays():
    g = ScanGeometry.circular(4, det_nu=9, det_nv=9, pitch_u_mm=0.5, pitch_v_mm=0.5)
    grid = Grid.centered((60, 60, 4), 1.0)
    z, y, x = grid.centers()
    mat = MaterialVolume(grid, (np.ones(grid.shape) * Material.SOFT_TISSUE).astype(np.uint8))
    spec = Spectrum.monoenergetic(60.0)
    p = simulate_line_integrals(mat, g, spec, TABLE.with_vacuum_air(), 5000, 0, noiseless=True)
    mu = mu_lookup(TABLE, Material.SOFT_TISSUE, 60.0)
    # central pixel rays cross the full 60 mm box along x (pixel centres at +-0.25 mm)
    for v in range(g.n_views):
        o, d, dist = g.view_rays(v)
        for k in (4 * 9 + 4,):
            chord = 60.0 / max(abs(d[k, 0]), abs(d[k, 1]))
            assert p.data[v].ravel()[k] == pytest.approx(mu * chord, rel=1e-6)


def test_empty_volume_mean_counts():
    g = ScanGeometry.circular(1, det_nu=100, det_nv=100)
    grid = Grid.centered((4, 4, 4), 1.0)
    mat = MaterialVolume(grid, np.zeros(grid.shape, np.uint8))
    spec = build_spectrum(90, 8)
    S = simulate_primary(mat, g, spec, TABLE, 300, 11, air_is_vacuum=True)
    N = 300
    mean_expected = N * spec.mean_energy
    var_expected = N * float(spec.weights @ spec.energies_kev ** 2)
    se = np.sqrt(var_expected / S.data.size)
    assert abs(S.data.mean() - mean_expected) < 3 * se
    assert S.domain == RAW


def test_flat_field_examples():
    g = ScanGeometry.circular(2, det_nu=80, det_nv=60)
    spec = build_spectrum(90, 8)
    F = flat_field(g, spec, 1000, 1, noiseless=True)
    np.testing.assert_allclose(F.data, 1000 * spec.mean_energy, rtol=1e-14)
    a, b = flat_field(g, spec, 1000, 1), flat_field(g, spec, 1000, 2)
    assert not np.array_equal(a.data, b.data)
    se = np.sqrt(1000 * float(spec.weights @ spec.energies_kev ** 2) * 2 / a.data.size)
    assert abs(a.data.mean() - b.data.mean()) < 3 * se
    np.testing.assert_array_equal(a.data, flat_field(g, spec, 1000, 1).data)


def test_poisson_std_ratio():
    g = ScanGeometry.circular(4, det_nu=100, det_nv=100)
    spec = build_spectrum(90, 8)
    r = []
    for n in (300, 5000):
        F = flat_field(g, spec, n, 5).data
        r.append(F.std() / F.mean())
    assert r[1] / r[0] == pytest.approx(np.sqrt(300 / 5000), rel=0.05)


def test_normalize_log_examples():
    F = ProjectionStack(np.full((1, 2, 3), 100.0), [0.0], RAW)
    assert not normalize_log(F, F, 1.0).data.any()
    S = F.with_data(F.data * np.exp(-2.0))
    np.testing.assert_allclose(normalize_log(S, F, 1.0).data, 2.0, rtol=1e-14)
    d = F.data.copy()
    d[0, 1, 2] = 0.0
    out = normalize_log(F.with_data(d), F, 0.5)
    assert out.flagged[0, 1, 2] and out.flagged.sum() == 1
    assert out.data[0, 1, 2] == pytest.approx(-np.log(0.5 / 100.0))
    assert out.domain == LINE
    bad = F.data.copy()
    bad[0, 0, 0] = 0
    with pytest.raises(ValueError):
        normalize_log(F, F.with_data(bad), 1.0)


def test_floor_energy():
    spec = build_spectrum(90, 8)
    assert floor_energy(spec) == pytest.approx(0.5 * spec.mean_energy)


def test_noiseless_projection_monotone_in_material():
    g = ScanGeometry.circular(6, det_nu=24, det_nv=12, pitch_u_mm=3.0, pitch_v_mm=3.0)
    grid = Grid.centered((24, 24, 8), 3.0)
    spec = build_spectrum(90, 8)
    small = water_cylinder_labels(grid, 20.0)
    lab = small.labels.copy()
    lab[3:5, 10:14, 10:14] = Material.METAL
    big = MaterialVolume(grid, lab)
    a = simulate_line_integrals(small, g, spec, TABLE, 1000, 0, noiseless=True).data
    b = simulate_line_integrals(big, g, spec, TABLE, 1000, 0, noiseless=True).data
    assert (b >= a - 1e-12).all() and (b > a + 1e-6).any()


def test_primary_reproducible_across_threads():
    g = ScanGeometry.circular(6, det_nu=24, det_nv=12, pitch_u_mm=3.0, pitch_v_mm=3.0)
    grid = Grid.centered((24, 24, 8), 3.0)
    mat = water_cylinder_labels(grid, 20.0)
    spec = build_spectrum(90, 4)
    a = simulate_primary(mat, g, spec, TABLE, 500, 42, threads=1).data
    b = simulate_primary(mat, g, spec, TABLE, 500, 42, threads=3).data
    np.testing.assert_array_equal(a, b)
    c = simulate_primary(mat, g, spec, TABLE, 500, 43).data
    assert not np.array_equal(a, c)


# ------------------------------------------------------------- Monte Carlo

MC_G = ScanGeometry.circular(2, det_nu=16, det_nv=8, pitch_u_mm=4.0, pitch_v_mm=4.0)
MC_GRID = Grid.centered((16, 16, 6), 4.0)


def test_mc_vacuum_conserves_energy_exactly(each_backend):
    mat = MaterialVolume(MC_GRID, np.zeros(MC_GRID.shape, np.uint8))
    spec = build_spectrum(90, 8)
    S, t = simulate_mc(mat, MC_G, spec, TABLE, 50, 3, air_is_vacuum=True)
    assert t.absorbed == 0 and t.escaped == 0
    assert t.deposited == t.sampled
    assert S.data.sum() == pytest.approx(t.deposited, rel=1e-12)
    assert t.photoelectric + t.compton + t.rayleigh == 0


def test_mc_energy_balance(each_backend):
    mat = water_cylinder_labels(MC_GRID, 24.0)
    lab = mat.labels.copy()
    lab[2:4, 7:9, 7:9] = Material.METAL
    mat = MaterialVolume(MC_GRID, lab)
    S, t = simulate_mc(mat, MC_G, build_spectrum(90, 8), TABLE, 40, 9)
    assert abs(t.balance) <= 1e-9 * t.sampled
    assert t.compton > 0 and t.rayleigh > 0 and t.photoelectric > 0
    assert S.data.sum() == pytest.approx(t.deposited, rel=1e-12)


def test_mc_scatter_free_matches_primary():
    mat = water_cylinder_labels(MC_GRID, 24.0)
    table = TABLE.with_fractions(photo=1.0)
    spec = build_spectrum(90, 8)
    n = 200
    S, t = simulate_mc(mat, MC_G, spec, table, n, 4)
    assert t.compton == 0 and t.rayleigh == 0
    P = simulate_primary(mat, MC_G, spec, table, n, 5)
    expect = simulate_primary(mat, MC_G, spec, table, n, 0, noiseless=True).data
    # per-pixel variance of an energy-weighted count is about N * E[E^2 T]; bound it by the open beam
    var = n * float(spec.weights @ spec.energies_kev ** 2) * np.ones_like(expect)
    se = np.sqrt(var.sum() * 2)
    assert abs(S.data.sum() - P.data.sum()) < 3 * se
    assert abs(S.data.sum() - expect.sum()) < 3 * np.sqrt(var.sum())


def test_mc_deterministic_and_backend_agreement():
    from cbctmar import _kernels
    mat = water_cylinder_labels(MC_GRID, 24.0)
    spec = build_spectrum(90, 8)
    runs = []
    for name in _kernels.available():
        with _kernels.use_backend(name):
            runs.append(simulate_mc(mat, MC_G, spec, TABLE, 20, 8, jitter=True))
    a, ta = simulate_mc(mat, MC_G, spec, TABLE, 20, 8, jitter=True)
    np.testing.assert_array_equal(a.data, runs[0][0].data)
    for S, t in runs[1:]:
        assert (t.photoelectric, t.compton, t.rayleigh) == (ta.photoelectric, ta.compton, ta.rayleigh)
        np.testing.assert_allclose(S.data, a.data, rtol=1e-9, atol=1e-6)


def test_mu_water_reference():
    spec = build_spectrum(90, 8)
    assert mu_water(TABLE, spec) == mu_lookup(TABLE, Material.SOFT_TISSUE, spec.mean_energy)


def test_analytic_chords_agree_with_simulation():
    g = ScanGeometry.circular(3, det_nu=20, det_nv=4, pitch_u_mm=5.0, pitch_v_mm=5.0)
    grid = Grid.centered((200, 200, 40), 0.5)
    mat = water_cylinder_labels(grid, 40.0)
    p = simulate_line_integrals(mat, g, Spectrum.monoenergetic(60.0), TABLE.with_vacuum_air(), 100, 0,
                                noiseless=True).data
    mu = mu_lookup(TABLE, Material.SOFT_TISSUE, 60.0)
    np.testing.assert_allclose(p, mu * cylinder_chords(g, 40.0), atol=mu * 1.0)
