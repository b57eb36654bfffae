import math

import numpy as np
import pytest
from scipy import ndimage

from cbctmar.geometry import ScanGeometry
from cbctmar.pipeline import (PipelineConfig, Physics, Report, ScoreRow, draw_photons,
                              generate_training_scan, make_test_scan, score)
from cbctmar.scenes import random_phantom
from cbctmar.simulate import simulate_line_integrals
from cbctmar.volume import Grid, segment_materials

G = ScanGeometry.circular(24, det_nu=48, det_nv=36, pitch_u_mm=5.0, pitch_v_mm=5.0)
GRID = Grid.centered((48, 48, 32), 2.5)
PHYS = Physics.default(G.kvp, 6)


@pytest.fixture(scope="module")
def metal_scan():
    return generate_training_scan(random_phantom(1003), G, GRID, 1003, phys=PHYS, keep_stages=True)


def test_metal_free_scan_has_empty_traces():
    s = generate_training_scan(random_phantom(1, with_metal=False), G, GRID, 1, phys=PHYS)
    assert not s.gt.data.any()
    assert 300 <= s.photons_noisy <= 1400
    assert s.noisy.data.shape == s.clean.data.shape == (24, 36, 48)


def test_trace_marks_high_attenuation(metal_scan):
    p, t = metal_scan.clean.data, metal_scan.gt.data.astype(bool)
    assert metal_scan.stages["metal3d"].count > 0
    for k in range(p.shape[0]):
        assert t[k].any()
        assert p[k][t[k]].mean() > p[k][~t[k]].mean()


def test_stages_are_reproducible(metal_scan):
    again = generate_training_scan(random_phantom(1003), G, GRID, 1003, phys=PHYS)
    np.testing.assert_array_equal(again.noisy.data, metal_scan.noisy.data)
    np.testing.assert_array_equal(again.gt.data, metal_scan.gt.data)


def _iou_in_neighbourhood(p, gt):
    nb = np.stack([ndimage.binary_dilation(v, iterations=3) for v in gt])
    scores = []
    for k in range(p.shape[0]):
        if not gt[k].any():
            continue
        inner, ring = p[k][gt[k]].mean(), p[k][nb[k] & ~gt[k]].mean()
        hi = (p[k] > 0.5 * (inner + ring)) & nb[k]
        scores.append((hi & gt[k]).sum() / (hi | gt[k]).sum())
    return float(np.mean(scores))


def test_gt_aligns_with_corrupted_projections(metal_scan):
    gt = metal_scan.gt.data.astype(bool)
    corrupted = _iou_in_neighbourhood(metal_scan.clean.data, gt)
    original = _iou_in_neighbourhood(metal_scan.stages["original"].data, gt)
    assert corrupted >= original


def test_noisy_and_clean_agree_statistically(metal_scan):
    mat = segment_materials(metal_scan.stages["corrupted"])
    lo = np.stack([simulate_line_integrals(mat, G, PHYS.spectrum, PHYS.table, 1400, s).data for s in range(20)])
    hi = np.stack([simulate_line_integrals(mat, G, PHYS.spectrum, PHYS.table, 5000, 100 + s).data
                   for s in range(20)])
    se = np.sqrt(lo.var(axis=0, ddof=1) / 20 + hi.var(axis=0, ddof=1) / 20)
    # soft-tissue paths; strongly attenuated pixels carry the low-count log bias
    sel = hi.mean(axis=0) < 3.0
    z = np.abs(lo.mean(axis=0) - hi.mean(axis=0))[sel] / se[sel]
    assert np.mean(z < 3.0) > 0.99


def test_draw_photons_range():
    draws = [draw_photons(s, (300, 1400)) for s in range(200)]
    assert min(draws) >= 300 and max(draws) <= 1400 and len(set(draws)) > 100
    assert draw_photons(5, (300, 1400)) == draw_photons(5, (300, 1400))


def test_test_scan_and_self_comparison():
    spec = random_phantom(5001)
    sc = make_test_scan("m0", spec, G, GRID, GRID, 5001, phys=PHYS)
    assert sc.has_metal and sc.metal_recon_grid.count > 0
    r = score(sc, "gt", None, sc.gt.data)
    assert r.dsc == 1.0 and r.iou == 1.0 and r.fpr == 0.0
    free = make_test_scan("f0", random_phantom(6000, with_metal=False), G, GRID, GRID, 6000, phys=PHYS)
    assert not free.has_metal and not free.gt.data.any()
    row = score(free, "x", None, np.zeros(free.gt.shape, np.uint8))
    assert math.isnan(row.dsc) and row.fpr == 0.0


def test_report_delta_and_csv():
    rows = []
    per_seed = {1: [0.9, 0.8], 2: [0.7, 0.75], 3: [0.95, 0.85]}
    for seed, vals in per_seed.items():
        for i, v in enumerate(vals):
            rows.append(ScoreRow(f"m{i}", "unet-full", seed, v, v / (2 - v), 0.0, 0.0, True))
        rows.append(ScoreRow("f0", "unet-full", seed, math.nan, math.nan, 1e-3 * seed, 1e-3, False))
    rows.append(ScoreRow("oof0", "unet-full", 1, 0.1, 0.05, 0.0, 0.0, True))
    rep = Report(rows)
    means = [np.mean(v) for v in per_seed.values()]
    assert rep.seed_delta("unet-full", exclude=("oof0",)) == pytest.approx(max(means) - min(means), abs=1e-12)
    assert rep.mean_metric("fpr", "unet-full", 2, has_metal=False) == pytest.approx(2e-3)
    text = rep.to_csv(("oof0",))
    assert "n/a" in text and text.count("summary") == 2
    summary = [l for l in text.splitlines() if l.startswith("summary,unet-full")][0].split(",")
    assert summary[2] == "6"

