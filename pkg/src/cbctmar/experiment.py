"""Segmentation experiment on synthetic scans: dataset generation, training
of one model per (strategy, seed), and scoring of every method on held-out
test scans (metal, metal-free and an out-of-FOV scene)."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import fileio
from .geometry import ScanGeometry
from .nn.data import SampleSet, build_samples, default_min_metal_px
from .nn.train import EpochRecord, TrainConfig, infer_stack, train
from .nn.unet import UNet
from .pipeline import (PipelineConfig, Physics, Report, TestScan, TrainingScan, cmar_traces,
                       generate_training_scan, make_test_scan, score)
from .scenes import out_of_fov_phantom, random_phantom
from .stacks import TraceStack
from .traces import consistency_check
from .volume import Grid

OOF_PREFIX = "oof"


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 10
    n_val: int = 2
    view_step: int = 1
    val_view_step: int = 6
    regime: str = "noisy"
    train_seed: int = 1000
    test_seed: int = 5000
    n_test_metal: int = 6
    n_test_free: int = 3
    out_of_fov: bool = True
    oof_margin_mm: float = 6.0


@dataclass
class Dataset:
    train: list[TrainingScan]
    val: list[TrainingScan]
    tests: list[TestScan]


def oof_sim_grid(grid: Grid, margin_mm: float) -> Grid:
    """Reconstruction grid extended in z far enough to hold the out-of-FOV implant."""
    k = int(math.ceil((margin_mm + 12.0) / grid.spacing[2]))
    nx, ny, nz = grid.dims
    return grid.extended((nx, ny, nz + 2 * k))


def generate_dataset(dc: DatasetConfig, g: ScanGeometry, grid: Grid, phys: Physics,
                     cfg: PipelineConfig = PipelineConfig(), threads: int = 1, log=None) -> Dataset:
    scans = []
    for i in range(dc.n_train + dc.n_val):
        s = dc.train_seed + i
        scans.append(generate_training_scan(random_phantom(s), g, grid, s, cfg, phys, threads))
        if log:
            log(f"training scan {i + 1}/{dc.n_train + dc.n_val}")
    tests = []
    for i in range(dc.n_test_metal):
        s = dc.test_seed + i
        tests.append(make_test_scan(f"m{i}", random_phantom(s), g, grid, grid, s, cfg, phys, threads))
    for i in range(dc.n_test_free):
        s = dc.test_seed + 1000 + i
        tests.append(make_test_scan(f"f{i}", random_phantom(s, with_metal=False), g, grid, grid, s, cfg, phys,
                                    threads))
    if dc.out_of_fov:
        s = dc.test_seed + 2000
        spec = out_of_fov_phantom(s, grid, dc.oof_margin_mm)
        tests.append(make_test_scan(f"{OOF_PREFIX}0", spec, g, grid, oof_sim_grid(grid, dc.oof_margin_mm), s,
                                    cfg, phys, threads))
    if log:
        log(f"{len(tests)} test scans")
    return Dataset(scans[:dc.n_train], scans[dc.n_train:], tests)


def _views(scans, regime, step):
    v, m = [], []
    for s in scans:
        p = s.noisy if regime == "noisy" else s.clean
        for k in range(0, p.n_views, step):
            v.append(p.data[k])
            m.append(s.gt.data[k])
    return v, m


def training_samples(ds: Dataset, dc: DatasetConfig, strategy: str) -> tuple[SampleSet, SampleSet]:
    nv, nu = ds.train[0].gt.shape[1:]
    mm = default_min_metal_px(nu, nv)
    tr = build_samples(*_views(ds.train, dc.regime, dc.view_step), strategy, mm)
    va = build_samples(*_views(ds.val, dc.regime, dc.val_view_step), "full", mm)
    return tr, va


def train_models(ds: Dataset, dc: DatasetConfig, base: TrainConfig, strategies, seeds,
                 log=None) -> dict[tuple[str, int], tuple[UNet, list[EpochRecord]]]:
    out = {}
    for strategy in strategies:
        tr, va = training_samples(ds, dc, strategy)
        for seed in seeds:
            cfg = TrainConfig(**{**base.to_dict(), "strategy": strategy, "seed": int(seed)})
            out[(strategy, int(seed))] = train(tr, va, cfg, log)
    return out


def run_experiment(tests: list[TestScan], models: dict, g: ScanGeometry, grid: Grid, phys: Physics,
                   cfg: PipelineConfig = PipelineConfig(), threads: int = 1, with_cmar: bool = True,
                   consistency_strategy: str = "full+crops") -> Report:
    """Score CMAR, every ``unet-<strategy>`` model and the consistency check
    applied to the ``consistency_strategy`` networks on each test scan.
    ``models`` maps (strategy, seed) to a network (or a (network, history) pair)."""
    rows = []
    for sc in tests:
        if with_cmar:
            pred, _ = cmar_traces(sc.proj, g, grid, phys, cfg, threads)
            rows.append(score(sc, "cmar", None, pred.data))
        for (strategy, seed), net in sorted(models.items()):
            net = net[0] if isinstance(net, tuple) else net
            pred = TraceStack(infer_stack(net, sc.proj.data))
            rows.append(score(sc, f"unet-{strategy}", seed, pred.data))
            if strategy == consistency_strategy:
                refined, _ = consistency_check(pred, g, grid, cfg.consistency_tau, threads=threads)
                rows.append(score(sc, "consistency", seed, refined.data))
    return Report(rows)


def summary_exclusions(report: Report) -> tuple[str, ...]:
    return tuple(sorted({r.scan_id for r in report.rows if r.scan_id.startswith(OOF_PREFIX)}))


# ---------------------------------------------------------------- storage

def save_dataset(ds: Dataset, root) -> None:
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "index.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["role", "scan_id", "has_metal", "photons"])
        for role, scans in (("train", ds.train), ("val", ds.val)):
            for i, s in enumerate(scans):
                sid = f"{role}{i:03d}"
                fileio.write_pprj(os.path.join(root, f"{sid}_noisy.pprj"), s.noisy)
                fileio.write_pprj(os.path.join(root, f"{sid}_clean.pprj"), s.clean)
                fileio.write_ptrc(os.path.join(root, f"{sid}_gt.ptrc"), s.gt)
                w.writerow([role, sid, int(bool(s.gt.data.any())), int(s.photons_noisy)])
        for t in ds.tests:
            fileio.write_pprj(os.path.join(root, f"{t.scan_id}.pprj"), t.proj)
            fileio.write_ptrc(os.path.join(root, f"{t.scan_id}_gt.ptrc"), t.gt)
            fileio.write_pmsk(os.path.join(root, f"{t.scan_id}_metal.pmsk"), t.metal_recon_grid)
            w.writerow(["test", t.scan_id, int(t.has_metal), int(t.proj.photons_per_pixel or 0)])


def load_dataset(root) -> Dataset:
    path = os.path.join(root, "index.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no dataset index at {path}")
    train_, val, tests = [], [], []
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        sid = r["scan_id"]
        j = lambda suffix: os.path.join(root, sid + suffix)  # noqa: E731
        if r["role"] in ("train", "val"):
            s = TrainingScan(fileio.read_pprj(j("_noisy.pprj")), fileio.read_pprj(j("_clean.pprj")),
                             fileio.read_ptrc(j("_gt.ptrc")), float(r["photons"]))
            (train_ if r["role"] == "train" else val).append(s)
        elif r["role"] == "test":
            tests.append(TestScan(sid, fileio.read_pprj(j(".pprj")), fileio.read_ptrc(j("_gt.ptrc")),
                                  fileio.read_pmsk(j("_metal.pmsk")), r["has_metal"] == "1"))
        else:
            raise ValueError(f"{path}: unknown role {r['role']!r}")
    if not train_ or not val:
        raise ValueError(f"{path}: dataset needs training and validation scans")
    return Dataset(train_, val, tests)


@dataclass
class Findings:
    """Directional checks of the experiment (values, not pass/fail)."""
    mean_dsc: dict = field(default_factory=dict)
    fpr_free: dict = field(default_factory=dict)        # (method, seed) -> mean FPR on metal-free scans
    delta: dict = field(default_factory=dict)           # method -> seed delta of mean DSC
    oof_dsc: dict = field(default_factory=dict)         # method -> mean DSC on the out-of-FOV scans


def findings(report: Report) -> Findings:
    excl = summary_exclusions(report)
    f = Findings()
    for m in report.methods():
        f.mean_dsc[m] = report.mean_metric("dsc", m, exclude=excl)
        f.delta[m] = report.seed_delta(m, exclude=excl)
        for s in report.seeds(m) or [None]:
            f.fpr_free[(m, s)] = report.mean_metric("fpr", m, s if s is not None else "any", has_metal=False)
        oof = [r.dsc for r in report.select(m) if r.scan_id in excl and not math.isnan(r.dsc)]
        f.oof_dsc[m] = float(np.mean(oof)) if oof else math.nan
    return f
