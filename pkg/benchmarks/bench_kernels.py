"""Wall-clock comparison of the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Each case runs the public API under both backends on the same inputs,
reports the best of N runs, the speed-up and the largest deviation between
the two outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cbctmar import _kernels
from cbctmar.attenuation import build_spectrum, default_table
from cbctmar.fdk import fdk_reconstruct
from cbctmar.geometry import ScanGeometry
from cbctmar.inpaint import inpaint_trace
from cbctmar.nn.unet import UNet
from cbctmar.projector import forward_project_array, project_metal_mask
from cbctmar.segment3d import region_grow_metal
from cbctmar.simulate import simulate_line_integrals, simulate_mc
from cbctmar.stacks import ProjectionStack
from cbctmar.volume import Grid, Mask3, MaterialVolume, Volume3


def cases():
    r = np.random.default_rng(0)
    g = ScanGeometry.circular(30, det_nu=64, det_nv=48, pitch_u_mm=3.8, pitch_v_mm=3.8)
    grid = Grid.centered((64, 64, 40), 2.0)
    vals = r.random(grid.shape)
    bits = np.zeros(grid.shape, np.uint8)
    bits[15:25, 28:36, 20:30] = 1
    proj = ProjectionStack(r.random((g.n_views, g.det_nv, g.det_nu)), g.angles)
    lab = np.ones(grid.shape, np.uint8)
    lab[bits > 0] = 3
    mat = MaterialVolume(grid, lab)
    sp, tb = build_spectrum(g.kvp, 8), default_table()
    hu = r.choice([0.0, 3500.0, 8000.0], size=(48, 48, 48), p=[0.6, 0.38, 0.02])
    img = r.random((96, 128))
    hole = np.zeros(img.shape, bool)
    hole[30:50, 40:70] = True
    x = r.random((4, 1, 64, 48)).astype(np.float32)
    net = UNet(4, 8, np.float32).init(0)
    g6 = ScanGeometry.circular(6, det_nu=64, det_nv=48, pitch_u_mm=3.8, pitch_v_mm=3.8)
    mc_geom = ScanGeometry.circular(1, det_nu=32, det_nv=24, pitch_u_mm=7.6, pitch_v_mm=7.6)
    return {
        "forward projection (6 views)": lambda: forward_project_array(vals, grid, g6),
        "metal trace projection": lambda: project_metal_mask(Mask3(grid, bits), g).data,
        "FDK reconstruction": lambda: fdk_reconstruct(proj, g, grid).data,
        "polychromatic simulation (6 views)": lambda: simulate_line_integrals(mat, g6, sp, tb, 1000, 1).data,
        "Monte Carlo (4 photons/pixel)": lambda: simulate_mc(mat, mc_geom, sp, tb, 4, 3)[0].data,
        "harmonic inpainting": lambda: inpaint_trace(img, hole),
        "region growing (48^3)": lambda: region_grow_metal(Volume3(Grid.centered((48, 48, 48), 1.0), hu)).bits,
        "U-Net forward (4x64x48)": lambda: net.forward(x),
    }


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, np.asarray(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)
    backends = _kernels.available()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available")
    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speed-up':>10s}{'max |diff|':>12s}")
    for name, fn in cases().items():
        times, outs = [], []
        for b in backends:
            with _kernels.use_backend(b):
                t, out = best_of(fn, a.repeat)
            times.append(t)
            outs.append(out.astype(np.float64))
        diff = float(np.max(np.abs(outs[0] - outs[-1]))) if len(outs) == 2 else 0.0
        speed = times[-1] / times[0] if len(times) == 2 else 1.0
        print(f"{name:32s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times) + f"{speed:9.1f}x{diff:12.2e}")


if __name__ == "__main__":
    main()
