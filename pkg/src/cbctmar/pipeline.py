"""Training-data generation and the segmentation experiment protocol.

Training scans follow the data-generation chain: simulate the phantom,
reconstruct, segment metal with a global threshold (median filter and
dilation to clean it up), clip the metal to at least 3400 HU, simulate the
metal alone for the ground-truth traces, remove metal from the projections
by inpainting and reconstruct a metal-free volume, reinsert the metal and
simulate noisy and clean metal-corrupted projections.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .attenuation import AttenuationTable, Spectrum, build_spectrum, default_table, mu_water
from .fdk import fdk_reconstruct, mu_to_hu
from .geometry import ScanGeometry
from .inpaint import inpaint_projections
from .metrics import confusion, dsc, fmt, fpr, fpr_conventional, iou, summarize
from .projector import project_metal_mask
from .segment3d import dilate3, global_threshold, median_filter3, region_grow_metal
from .simulate import simulate_line_integrals
from .stacks import ProjectionStack, TraceStack
from .traces import binarize_metal_projection, consistency_check
from .volume import (Grid, Mask3, MaterialVolume, Material, PhantomSpec, Volume3, clip_metal_min,
                     insert_metal, metal_mask_of, rasterize_phantom, segment_materials)

METHODS = ("cmar", "consistency", "unet-full", "unet-crops", "unet-full+crops")


@dataclass(frozen=True)
class PipelineConfig:
    threshold_hu: float = 3400.0
    clip_hu: float = 3400.0
    gt_eps: float = 0.01
    photons_noisy: tuple[float, float] = (300.0, 1400.0)
    photons_clean: float = 5000.0
    median_radius: int = 1
    dilate_radius: int = 1
    spectrum_bins: int = 8
    inpaint_method: str = "harmonic"
    cmar_seed_hu: float = 7000.0
    cmar_grow_hu: float = 3000.0
    consistency_tau: float = 0.9
    connectivity: int = 26


@dataclass
class Physics:
    spectrum: Spectrum
    table: AttenuationTable

    @property
    def mu_water(self) -> float:
        return mu_water(self.table, self.spectrum)

    @classmethod
    def default(cls, kvp: float, bins: int = 8) -> "Physics":
        return cls(build_spectrum(kvp, bins), default_table())


@dataclass
class TrainingScan:
    noisy: ProjectionStack
    clean: ProjectionStack
    gt: TraceStack
    photons_noisy: float
    stages: dict = field(default_factory=dict)


def _metal_only(mask: Mask3) -> MaterialVolume:
    return MaterialVolume(mask.grid, np.where(mask.bits.astype(bool), Material.METAL, Material.AIR))


def metal_traces(mask: Mask3, g: ScanGeometry, phys: Physics, eps: float, threads: int = 1) -> TraceStack:
    """Noiseless simulation of the metal alone (everything else vacuum), thresholded."""
    table = phys.table.with_vacuum_air()
    p = simulate_line_integrals(_metal_only(mask), g, phys.spectrum, table, 1.0, 0, noiseless=True,
                                threads=threads)
    return binarize_metal_projection(p, eps)


def draw_photons(seed: int, lo_hi: tuple[float, float]) -> int:
    lo, hi = lo_hi
    return int(rng.generator(seed, 10).integers(int(lo), int(hi) + 1))


def generate_training_scan(spec: PhantomSpec, g: ScanGeometry, grid: Grid, seed: int,
                           cfg: PipelineConfig = PipelineConfig(), phys: Physics | None = None,
                           threads: int = 1, keep_stages: bool = False) -> TrainingScan:
    phys = phys or Physics.default(g.kvp, cfg.spectrum_bins)
    sp, tb, muw = phys.spectrum, phys.table, phys.mu_water
    vol = rasterize_phantom(spec, grid)
    p_orig = simulate_line_integrals(segment_materials(vol), g, sp, tb, cfg.photons_clean,
                                     rng.derive(seed, 11) & 0xFFFFFFFF, threads=threads)
    recon = mu_to_hu(fdk_reconstruct(p_orig, g, grid, threads), muw)
    m = global_threshold(recon, cfg.threshold_hu)
    if m.count:
        m = dilate3(median_filter3(m, cfg.median_radius), cfg.dilate_radius)
    metal_hu = clip_metal_min(recon, m, cfg.clip_hu)
    gt = metal_traces(m, g, phys, cfg.gt_eps, threads)
    if m.count:
        trace_in = project_metal_mask(m, g, threads=threads)
        free = mu_to_hu(fdk_reconstruct(inpaint_projections(p_orig, trace_in, cfg.inpaint_method, threads),
                                        g, grid, threads), muw)
    else:
        free = recon
    corrupted = insert_metal(free, m, metal_hu)
    mat = segment_materials(corrupted)
    n_noisy = draw_photons(seed, cfg.photons_noisy)
    noisy = simulate_line_integrals(mat, g, sp, tb, n_noisy, rng.derive(seed, 12) & 0xFFFFFFFF, threads=threads)
    clean = simulate_line_integrals(mat, g, sp, tb, cfg.photons_clean, rng.derive(seed, 13) & 0xFFFFFFFF,
                                    threads=threads)
    stages = {}
    if keep_stages:
        stages = dict(phantom=vol, original=p_orig, recon=recon, metal3d=m, metal_hu=metal_hu,
                      metal_free=free, corrupted=corrupted)
    return TrainingScan(noisy, clean, gt, n_noisy, stages)


@dataclass
class TestScan:
    scan_id: str
    proj: ProjectionStack
    gt: TraceStack
    metal_recon_grid: Mask3
    has_metal: bool


def make_test_scan(scan_id: str, spec: PhantomSpec, g: ScanGeometry, recon_grid: Grid, sim_grid: Grid,
                   seed: int, cfg: PipelineConfig = PipelineConfig(), phys: Physics | None = None,
                   threads: int = 1) -> TestScan:
    """Simulate a phantom directly on ``sim_grid`` (which may extend beyond the
    reconstruction grid); ground truth comes from the phantom's own metal."""
    phys = phys or Physics.default(g.kvp, cfg.spectrum_bins)
    vol = rasterize_phantom(spec, sim_grid)
    n = draw_photons(seed, cfg.photons_noisy)
    p = simulate_line_integrals(segment_materials(vol), g, phys.spectrum, phys.table, n,
                                rng.derive(seed, 12) & 0xFFFFFFFF, threads=threads)
    metal_sim = metal_mask_of(spec, sim_grid)
    gt = metal_traces(metal_sim, g, phys, cfg.gt_eps, threads) if metal_sim.count else TraceStack.empty_like(p)
    return TestScan(scan_id, p, gt, metal_mask_of(spec, recon_grid), bool(metal_sim.count))


def cmar_traces(p: ProjectionStack, g: ScanGeometry, grid: Grid, phys: Physics,
                cfg: PipelineConfig = PipelineConfig(), threads: int = 1) -> tuple[TraceStack, Mask3]:
    """Region-grown image-domain metal, forward projected."""
    recon = mu_to_hu(fdk_reconstruct(p, g, grid, threads), phys.mu_water)
    m = region_grow_metal(recon, cfg.cmar_seed_hu, cfg.cmar_grow_hu, cfg.connectivity)
    return project_metal_mask(m, g, threads=threads), m


# ------------------------------------------------------------- reporting

@dataclass
class ScoreRow:
    scan_id: str
    method: str
    seed: int | None
    dsc: float
    iou: float
    fpr: float
    fpr_conventional: float
    has_metal: bool


def score(scan: TestScan, method: str, seed, pred: np.ndarray) -> ScoreRow:
    c = confusion(pred, scan.gt.data)
    return ScoreRow(scan.scan_id, method, seed, dsc(c), iou(c), fpr(c), fpr_conventional(c), scan.has_metal)


@dataclass
class Report:
    rows: list[ScoreRow]

    def select(self, method=None, seed="any", has_metal=None, scan_id=None):
        out = []
        for r in self.rows:
            if method is not None and r.method != method:
                continue
            if seed != "any" and r.seed != seed:
                continue
            if has_metal is not None and r.has_metal != has_metal:
                continue
            if scan_id is not None and r.scan_id != scan_id:
                continue
            out.append(r)
        return out

    def methods(self):
        return sorted({r.method for r in self.rows}, key=lambda m: METHODS.index(m) if m in METHODS else 99)

    def seeds(self, method):
        return sorted({r.seed for r in self.rows if r.method == method and r.seed is not None})

    def mean_metric(self, metric: str, method: str, seed="any", has_metal=True, exclude=()) -> float:
        vals = [getattr(r, metric) for r in self.select(method, seed, has_metal)
                if r.scan_id not in exclude and not math.isnan(getattr(r, metric))]
        return float(np.mean(vals)) if vals else math.nan

    def seed_delta(self, method: str, metric: str = "dsc", exclude=()) -> float:
        """max - min over training seeds of the per-seed mean metric on metal scans."""
        per = [self.mean_metric(metric, method, s, True, exclude) for s in self.seeds(method)]
        per = [p for p in per if not math.isnan(p)]
        return float(max(per) - min(per)) if per else math.nan

    def to_csv(self, exclude_from_summary=()) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scan_id", "method", "seed", "dsc", "iou", "fpr", "fpr_conventional"])
        for r in self.rows:
            w.writerow([r.scan_id, r.method, "" if r.seed is None else r.seed, fmt(r.dsc), fmt(r.iou),
                        fmt(r.fpr, 9), fmt(r.fpr_conventional, 9)])
        w.writerow([])
        w.writerow(["summary", "method", "n_metal_scans", "dsc_mean", "dsc_se", "iou_mean", "iou_se",
                    "fpr_metal_free_mean", "fpr_metal_free_se", "seed_delta_dsc"])
        for m in self.methods():
            metal = [r for r in self.select(m, has_metal=True) if r.scan_id not in exclude_from_summary]
            free = self.select(m, has_metal=False)
            d = summarize([r.dsc for r in metal]) if metal else (math.nan, math.nan)
            i = summarize([r.iou for r in metal]) if metal else (math.nan, math.nan)
            f = summarize([r.fpr for r in free]) if free else (math.nan, math.nan)
            w.writerow(["summary", m, len(metal), fmt(d[0]), fmt(d[1]), fmt(i[0]), fmt(i[1]),
                        fmt(f[0], 9), fmt(f[1], 9), fmt(self.seed_delta(m, exclude=exclude_from_summary))])
        return buf.getvalue()

    def boxplot_png(self, path, exclude=()) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        methods = self.methods()
        data = [[r.dsc for r in self.select(m, has_metal=True)
                 if r.scan_id not in exclude and not math.isnan(r.dsc)] for m in methods]
        fig, ax = plt.subplots(figsize=(7, 3.5), dpi=100)
        ax.boxplot(data)
        ax.set_xticks(range(1, len(methods) + 1), methods, fontsize=8)
        ax.set_ylabel("DSC")
        ax.set_ylim(0, 1.02)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
