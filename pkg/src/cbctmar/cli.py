"""Command-line driver.

Exit codes: 0 success, 2 invalid input (arguments, config, file formats,
shape mismatches), 1 failure while computing.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import experiment as ex
from . import fileio
from .export import save_png, to_image
from .fdk import fdk_reconstruct, mu_to_hu
from .inpaint import inpaint_projections, mar_pipeline
from .metrics import confusion, dsc, fpr, fpr_conventional, iou
from .nn.train import history_csv, infer_stack, train
from .pipeline import Report, ScoreRow
from .projector import project_metal_mask
from .segment3d import dilate3, global_threshold, median_filter3, region_grow_metal
from .simulate import simulate_line_integrals
from .stacks import LINE, TraceStack, check_detector
from .traces import consistency_check
from .volume import clip_metal_min, metal_mask_of, rasterize_phantom, segment_materials


class ValidationError(Exception):
    pass


def _validated(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (OSError, ValueError, TypeError, IndexError, KeyError) as e:
        raise ValidationError(str(e)) from None


class Ctx:
    def __init__(self, args):
        st = _validated(cfgmod.load, args.config) if args.config else cfgmod.defaults()
        if args.seed is not None:
            st = st.with_values("run", seed=args.seed)
        if args.threads is not None:
            st = st.with_values("run", threads=args.threads)
        self.st = st
        self.seed = st.get("run", "seed")
        self.threads = st.get("run", "threads")
        self.g = st.geometry()
        self.grid = st.grid()
        self.phys = st.physics()
        self.pcfg = st.pipeline()

    def proj(self, path, line=True):
        p = _validated(fileio.read_pprj, path)
        _validated(check_detector, self.g, p.data, os.fspath(path))
        if not np.allclose(p.angles, self.g.angles.astype(np.float32), atol=1e-6):
            raise ValidationError(f"{path}: view angles differ from the configured geometry")
        if line and p.domain != LINE:
            raise ValidationError(f"{path}: expected line integrals (domain 1), got domain {p.domain}")
        return p

    def traces(self, path):
        t = _validated(fileio.read_ptrc, path)
        _validated(check_detector, self.g, t.data, os.fspath(path))
        return t

    def volume(self, path):
        return _validated(fileio.read_pvol, path)

    def mask(self, path):
        return _validated(fileio.read_pmsk, path)


# ------------------------------------------------------------ subcommands

def cmd_phantom(ctx, a):
    spec = _validated(ctx.st.phantom, ctx.grid)
    fileio.write_pvol(a.output, rasterize_phantom(spec, ctx.grid))
    if a.metal_mask:
        fileio.write_pmsk(a.metal_mask, metal_mask_of(spec, ctx.grid))


def cmd_simulate(ctx, a):
    vol = ctx.volume(a.volume)
    s = ctx.st.section("simulation")
    p = simulate_line_integrals(segment_materials(vol), ctx.g, ctx.phys.spectrum, ctx.phys.table,
                                s["photons_per_pixel"], ctx.seed, noiseless=s["noiseless"], threads=ctx.threads)
    fileio.write_pprj(a.output, p)


def cmd_reconstruct(ctx, a):
    p = ctx.proj(a.projections)
    fileio.write_pvol(a.output, mu_to_hu(fdk_reconstruct(p, ctx.g, ctx.grid, ctx.threads), ctx.phys.mu_water))


def cmd_segment3d(ctx, a):
    vol = ctx.volume(a.volume)
    c = ctx.pcfg
    if a.method == "region-grow":
        m = region_grow_metal(vol, c.cmar_seed_hu, c.cmar_grow_hu, c.connectivity)
    else:
        m = global_threshold(vol, c.threshold_hu)
        if a.method == "pipeline" and m.count:
            m = dilate3(median_filter3(m, c.median_radius), c.dilate_radius)
    fileio.write_pmsk(a.output, m)


def cmd_project_metal(ctx, a):
    fileio.write_ptrc(a.output, project_metal_mask(ctx.mask(a.mask), ctx.g, threads=ctx.threads))


def cmd_gen_dataset(ctx, a):
    dc = ctx.st.dataset()
    ds = ex.generate_dataset(dc, ctx.g, ctx.grid, ctx.phys, ctx.pcfg, ctx.threads, log=_log(a))
    ex.save_dataset(ds, a.output)
    with open(os.path.join(a.output, "config.ini"), "w", encoding="utf-8") as f:
        f.write(cfgmod.dump(ctx.st))


def cmd_train(ctx, a):
    ds = _validated(ex.load_dataset, a.dataset)
    overrides = {"strategy": a.strategy} if a.strategy else {}
    tc = _validated(ctx.st.train, **overrides)
    tr, va = ex.training_samples(ds, ctx.st.dataset(), tc.strategy)
    log = _log(a)
    net, hist = train(tr, va, tc, (lambda r: log(f"epoch {r.epoch} val_loss {r.val_loss:.6f}")) if log else None)
    fileio.write_pnet(a.output, net)
    if a.history:
        with open(a.history, "w", encoding="utf-8", newline="") as f:
            f.write(history_csv(hist))


def cmd_infer(ctx, a):
    net = _validated(fileio.read_pnet, a.model, np.dtype(ctx.st.get("train", "dtype")))
    p = ctx.proj(a.projections)
    fileio.write_ptrc(a.output, TraceStack(infer_stack(net, p.data)))


def cmd_consistency(ctx, a):
    refined, metal = consistency_check(ctx.traces(a.traces), ctx.g, ctx.grid, ctx.pcfg.consistency_tau,
                                       threads=ctx.threads)
    fileio.write_ptrc(a.output, refined)
    if a.mask:
        fileio.write_pmsk(a.mask, metal)


def cmd_inpaint(ctx, a):
    p, t = ctx.proj(a.projections), ctx.traces(a.traces)
    fileio.write_pprj(a.output, inpaint_projections(p, t, ctx.pcfg.inpaint_method, ctx.threads))


def cmd_mar(ctx, a):
    p, t = ctx.proj(a.projections), ctx.traces(a.traces)
    if a.metal_mask:
        metal = ctx.mask(a.metal_mask)
        if metal.grid != ctx.grid:
            raise ValidationError(f"{a.metal_mask}: mask grid differs from the configured grid")
    else:
        _, metal = consistency_check(t, ctx.g, ctx.grid, ctx.pcfg.consistency_tau, threads=ctx.threads)
    recon = mu_to_hu(fdk_reconstruct(p, ctx.g, ctx.grid, ctx.threads), ctx.phys.mu_water)
    metal_hu = clip_metal_min(recon, metal, ctx.pcfg.clip_hu)
    out = mar_pipeline(p, t, ctx.g, ctx.grid, metal, metal_hu, ctx.phys.mu_water, ctx.pcfg.inpaint_method,
                       ctx.threads)
    fileio.write_pvol(a.output, out)


def _parse_model(spec: str):
    try:
        key, path = spec.split("=", 1)
        strategy, seed = key.rsplit(":", 1)
        return (strategy, int(seed)), path
    except ValueError:
        raise ValidationError(f"--model expects STRATEGY:SEED=PATH, got {spec!r}") from None


def cmd_evaluate(ctx, a):
    if a.dataset:
        if a.gt or a.pred:
            raise ValidationError("use either --dataset/--model or --gt/--pred")
        ds = _validated(ex.load_dataset, a.dataset)
        dtype = np.dtype(ctx.st.get("train", "dtype"))
        models = {}
        for spec in a.model or []:
            key, path = _parse_model(spec)
            models[key] = _validated(fileio.read_pnet, path, dtype)
        for t in ds.tests:
            _validated(check_detector, ctx.g, t.proj.data, t.scan_id)
        report = ex.run_experiment(ds.tests, models, ctx.g, ctx.grid, ctx.phys, ctx.pcfg, ctx.threads,
                                   with_cmar=not a.no_cmar)
    else:
        if not a.gt or len(a.gt) != len(a.pred or []):
            raise ValidationError("--gt and --pred must be given the same number of times")
        rows = []
        for gpath, ppath in zip(a.gt, a.pred):
            gt, pred = _validated(fileio.read_ptrc, gpath), _validated(fileio.read_ptrc, ppath)
            if gt.shape != pred.shape:
                raise ValidationError(f"{ppath}: shape {pred.shape} differs from {gpath} {gt.shape}")
            c = confusion(pred.data, gt.data)
            sid = os.path.splitext(os.path.basename(gpath))[0]
            rows.append(ScoreRow(sid, a.method, None, dsc(c), iou(c), fpr(c), fpr_conventional(c),
                                 bool(gt.data.any())))
        report = Report(rows)
    excl = ex.summary_exclusions(report)
    with open(a.output, "w", encoding="utf-8", newline="") as f:
        f.write(report.to_csv(excl))
    if a.png:
        report.boxplot_png(a.png, excl)


def cmd_export_png(ctx, a):
    obj = _validated(fileio.read_any, a.input)
    img = _validated(to_image, obj, a.index)
    save_png(a.output, img)


# ------------------------------------------------------------------ parser

def _log(a):
    if not a.verbose:
        return None
    return lambda msg: print(msg, file=sys.stderr, flush=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--threads", type=int, help="overrides [run] threads")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="cbctmar", description="Projection-domain metal segmentation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("phantom", cmd_phantom, "rasterize the configured phantom to PVOL")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--metal-mask", help="also write the metal inserts as PMSK")
    p = add("simulate", cmd_simulate, "simulate line-integral projections of a PVOL")
    p.add_argument("volume")
    p.add_argument("-o", "--output", required=True)
    p = add("reconstruct", cmd_reconstruct, "FDK reconstruction in HU")
    p.add_argument("projections")
    p.add_argument("-o", "--output", required=True)
    p = add("segment3d", cmd_segment3d, "3-D metal segmentation")
    p.add_argument("volume")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--method", choices=("threshold", "pipeline", "region-grow"), default="threshold")
    p = add("project-metal", cmd_project_metal, "forward project a metal mask to traces")
    p.add_argument("mask")
    p.add_argument("-o", "--output", required=True)
    p = add("gen-dataset", cmd_gen_dataset, "generate training and test scans into a directory")
    p.add_argument("-o", "--output", required=True)
    p = add("train", cmd_train, "train a U-Net on a dataset directory")
    p.add_argument("dataset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--strategy", choices=("full", "crops", "full+crops"))
    p.add_argument("--history", help="per-epoch CSV")
    p = add("infer", cmd_infer, "predict metal traces")
    p.add_argument("model")
    p.add_argument("projections")
    p.add_argument("-o", "--output", required=True)
    p = add("consistency", cmd_consistency, "consistency-check refinement of traces")
    p.add_argument("traces")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mask", help="also write the supported 3-D metal as PMSK")
    p = add("inpaint", cmd_inpaint, "inpaint projections inside traces")
    p.add_argument("projections")
    p.add_argument("traces")
    p.add_argument("-o", "--output", required=True)
    p = add("mar", cmd_mar, "inpaint, reconstruct and reinsert metal")
    p.add_argument("projections")
    p.add_argument("traces")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--metal-mask", help="3-D metal (default: consistency check of the traces)")
    p = add("evaluate", cmd_evaluate, "score traces or run the segmentation experiment")
    p.add_argument("-o", "--output", required=True, help="report CSV")
    p.add_argument("--png", help="DSC box plot")
    p.add_argument("--dataset")
    p.add_argument("--model", action="append", help="STRATEGY:SEED=PATH (repeatable)")
    p.add_argument("--no-cmar", action="store_true")
    p.add_argument("--gt", action="append")
    p.add_argument("--pred", action="append")
    p.add_argument("--method", default="pred", help="method label for --gt/--pred rows")
    p = add("export-png", cmd_export_png, "8-bit PNG preview of any toolkit file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--index", type=int, help="slice or view (default: middle)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        ctx = Ctx(a)
        a.fn(ctx, a)
    except (ValidationError, cfgmod.ConfigError, fileio.FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
