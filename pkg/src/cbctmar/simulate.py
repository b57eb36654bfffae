"""Polychromatic projection simulation.

The primary beam is evaluated analytically per pixel from per-material path
lengths, with Poisson photon noise drawn per energy bin. Monte Carlo
transport (photoelectric absorption, Compton and Rayleigh scattering with
Woodcock tracking) is available separately.

Random streams: view ``v`` of the primary simulation uses a Philox
generator keyed by ``derive(seed, 0, v)``, flat fields use ``(seed, 1, v)``
and Monte Carlo histories ``(seed, 2, v)``. Results therefore do not depend
on the number of worker threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .attenuation import AttenuationTable, Spectrum
from .geometry import ScanGeometry
from .projector import label_paths
from .stacks import LINE, RAW, ProjectionStack, parallel_map
from .volume import Material, MaterialVolume

_N_MAT = len(Material)
STREAM_PRIMARY, STREAM_FLAT, STREAM_MC = 0, 1, 2


def _check_table(table: AttenuationTable, spec: Spectrum) -> np.ndarray:
    """mu of each material at each spectrum energy, (4, n_bins)."""
    return table.mu_at(spec.energies_kev)


def _realize(expected_counts: np.ndarray, energies: np.ndarray, gen) -> np.ndarray:
    return gen.poisson(expected_counts) @ energies


def simulate_primary(mat: MaterialVolume, g: ScanGeometry, spec: Spectrum, table: AttenuationTable,
                     photons_per_pixel: float, seed: int, noiseless: bool = False,
                     air_is_vacuum: bool = False, threads: int = 1) -> ProjectionStack:
    """Detected energy (keV) per pixel from the attenuated primary beam.

    Expected value ``N * sum_b w_b E_b exp(-sum_m mu_m(E_b) L_m)``; the noisy
    realization is ``sum_b E_b Poisson(N w_b exp(...))``.
    """
    if photons_per_pixel < 1:
        raise ValueError("photons_per_pixel must be >= 1")
    if air_is_vacuum:
        table = table.with_vacuum_air()
    mu = _check_table(table, spec)
    w, E = spec.weights, spec.energies_kev

    def one(view):
        L = label_paths(mat.labels, _N_MAT, mat.grid, g, view)
        T = np.exp(-(L @ mu))  # (pixels, bins)
        lam = photons_per_pixel * w * T
        if noiseless:
            img = lam @ E
        else:
            img = _realize(lam, E, rng.generator(seed, STREAM_PRIMARY, view))
        return img.reshape(g.det_nv, g.det_nu)

    data = np.stack(parallel_map(one, range(g.n_views), threads))
    return ProjectionStack(data, g.angles, RAW, seed, photons_per_pixel)


def flat_field(g: ScanGeometry, spec: Spectrum, photons_per_pixel: float, seed: int,
               noiseless: bool = False) -> ProjectionStack:
    """Detector signal with nothing between source and detector."""
    if photons_per_pixel < 1:
        raise ValueError("photons_per_pixel must be >= 1")
    lam = np.broadcast_to(photons_per_pixel * spec.weights, (g.det_nv * g.det_nu, spec.weights.size))
    views = []
    for v in range(g.n_views):
        if noiseless:
            img = np.full(g.det_nv * g.det_nu, photons_per_pixel * spec.mean_energy)
        else:
            img = _realize(lam, spec.energies_kev, rng.generator(seed, STREAM_FLAT, v))
        views.append(img.reshape(g.det_nv, g.det_nu))
    return ProjectionStack(np.stack(views), g.angles, RAW, seed, photons_per_pixel)


def floor_energy(spec: Spectrum) -> float:
    """Half a mean-energy photon: substituted for empty pixels before the log."""
    return 0.5 * spec.mean_energy


def normalize_log(S: ProjectionStack, F: ProjectionStack, eps_floor: float) -> ProjectionStack:
    """p = -log(S / F); pixels with S <= 0 use ``eps_floor`` in place of S and are flagged."""
    if S.domain != RAW or F.domain != RAW:
        raise ValueError("normalize_log expects raw-energy stacks")
    Fd = F.data
    if Fd.shape != S.data.shape:
        if Fd.shape[1:] == S.data.shape[1:] and Fd.shape[0] == 1:
            Fd = np.broadcast_to(Fd, S.data.shape)
        else:
            raise ValueError(f"flat field shape {Fd.shape} does not match {S.data.shape}")
    if np.any(Fd <= 0):
        bad = np.argwhere(Fd <= 0)[0]
        raise ValueError(f"flat field is not positive at (view, v, u) = {tuple(int(i) for i in bad)}")
    if eps_floor <= 0:
        raise ValueError("eps_floor must be positive")
    flagged = S.data <= 0
    num = np.where(flagged, eps_floor, S.data)
    p = -np.log(num / Fd)
    return ProjectionStack(p, S.angles, LINE, S.seed, S.photons_per_pixel, flagged)


# ------------------------------------------------------------ Monte Carlo

@dataclass(frozen=True)
class MCTally:
    sampled: float
    deposited: float
    absorbed: float
    escaped: float
    photoelectric: int
    compton: int
    rayleigh: int

    @property
    def balance(self) -> float:
        """sampled - (deposited + absorbed + escaped); zero up to rounding."""
        return self.sampled - (self.deposited + self.absorbed + self.escaped)


def simulate_mc(mat: MaterialVolume, g: ScanGeometry, spec: Spectrum, table: AttenuationTable,
                n_photons_per_pixel: int, seed: int, e_min_kev: float | None = None,
                jitter: bool = False, air_is_vacuum: bool = False,
                threads: int = 1) -> tuple[ProjectionStack, MCTally]:
    """Photon histories aimed at every pixel centre (optionally jittered
    within the pixel); energy is deposited in whichever pixel is struck.

    Photons falling below ``e_min_kev`` (default: bottom of the table)
    are absorbed locally.
    """
    if n_photons_per_pixel < 1:
        raise ValueError("n_photons_per_pixel must be >= 1")
    if air_is_vacuum:
        table = table.with_vacuum_air()
    e_min = float(table.energies_kev[0] if e_min_kev is None else e_min_kev)
    egrid = np.ascontiguousarray(table.energies_kev, dtype=np.float64)
    mu = np.ascontiguousarray(table.mu, dtype=np.float64)
    cum_pe = np.ascontiguousarray(table.photo_frac, dtype=np.float64)
    cum_co = np.ascontiguousarray(table.photo_frac + table.compton_frac, dtype=np.float64)
    present = np.unique(mat.labels)
    mumax = np.ascontiguousarray(mu[present].max(axis=0))
    labels = np.ascontiguousarray(mat.labels)

    def one(view):
        ec, eu, ev = g.basis(view)
        return _kernels.mc_view(labels, mat.grid.lo, mat.grid.spacing, mu, cum_pe, cum_co, egrid, mumax,
                                spec.energies_kev, spec.cdf, g.source_position(view), ec, eu, ev,
                                g.detector_center(view), g.det_nu, g.det_nv, g.pitch_u_mm, g.pitch_v_mm,
                                int(n_photons_per_pixel), rng.key32(seed, STREAM_MC, view), e_min, bool(jitter))

    res = parallel_map(one, range(g.n_views), threads)
    data = np.stack([r[0] for r in res])
    t = np.sum([r[1] for r in res], axis=0)
    c = np.sum([r[2] for r in res], axis=0)
    tally = MCTally(float(t[0]), float(t[1]), float(t[2]), float(t[3]), int(c[0]), int(c[1]), int(c[2]))
    return ProjectionStack(data, g.angles, RAW, seed, n_photons_per_pixel), tally


def simulate_line_integrals(mat: MaterialVolume, g: ScanGeometry, spec: Spectrum, table: AttenuationTable,
                            photons_per_pixel: float, seed: int, noiseless: bool = False,
                            noisy_flat: bool = False, threads: int = 1) -> ProjectionStack:
    """simulate_primary followed by flat-field normalization at the same
    photon count. The flat field is the expected (noise-free) one unless
    ``noisy_flat`` is set."""
    S = simulate_primary(mat, g, spec, table, photons_per_pixel, seed, noiseless, threads=threads)
    F = flat_field(g, spec, photons_per_pixel, seed, noiseless or not noisy_flat)
    return normalize_log(S, F, floor_energy(spec))


__all__ = ["simulate_primary", "flat_field", "normalize_log", "floor_energy", "simulate_mc",
           "MCTally", "simulate_line_integrals", "LINE", "RAW"]
