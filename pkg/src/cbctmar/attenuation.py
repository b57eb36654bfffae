"""Spectrum model and embedded attenuation tables.

Mass attenuation coefficients are coarse values read off a public photon
cross-section compilation (XCOM / NIST X-ray tables) at eight node energies,
then log-log interpolated onto the ten-energy working grid. The metal class
uses titanium. These numbers are repository data: only their ordering and
monotonicity are relied upon.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Material

ENERGY_GRID_KEV = np.array([20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 100.0, 120.0, 150.0])
SPECTRUM_MIN_KEV = 20.0
ELECTRON_REST_KEV = 510.99895

_NODES = np.array([20.0, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0, 150.0])

# material -> (density g/cm^3, mu/rho cm^2/g at _NODES)
_MASS_ATT = {
    Material.AIR: (0.001205, [0.7779, 0.3538, 0.2485, 0.2080, 0.1875, 0.1662, 0.1541, 0.1356]),
    Material.SOFT_TISSUE: (1.04, [0.8096, 0.3756, 0.2683, 0.2269, 0.2059, 0.1837, 0.1707, 0.1505]),
    Material.BONE: (1.92, [4.001, 1.331, 0.6655, 0.4242, 0.3148, 0.2229, 0.1855, 0.1480]),
    Material.METAL: (4.54, [15.85, 4.972, 2.214, 1.213, 0.7661, 0.4052, 0.2721, 0.1649]),
}

# photoelectric and coherent (Rayleigh) fractions of the total at _NODES;
# incoherent (Compton) takes the remainder
_FRACTIONS = {
    Material.AIR: ([0.67, 0.43, 0.25, 0.145, 0.09, 0.04, 0.021, 0.007],
                   [0.094, 0.098, 0.082, 0.064, 0.05, 0.033, 0.023, 0.012]),
    Material.SOFT_TISSUE: ([0.67, 0.43, 0.25, 0.145, 0.09, 0.04, 0.021, 0.007],
                           [0.094, 0.098, 0.082, 0.064, 0.05, 0.033, 0.023, 0.012]),
    Material.BONE: ([0.90, 0.75, 0.55, 0.38, 0.26, 0.12, 0.06, 0.015],
                    [0.05, 0.07, 0.07, 0.06, 0.05, 0.035, 0.025, 0.012]),
    Material.METAL: ([0.95, 0.92, 0.87, 0.80, 0.71, 0.53, 0.37, 0.14],
                     [0.03, 0.04, 0.05, 0.055, 0.06, 0.06, 0.055, 0.04]),
}


def _loglog(x_nodes, y_nodes, x):
    return np.exp(np.interp(np.log(x), np.log(x_nodes), np.log(y_nodes)))


@dataclass(frozen=True)
class Spectrum:
    energies_kev: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies_kev, dtype=np.float64).ravel()
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if e.shape != w.shape or e.size == 0:
            raise ValueError("energies and weights must be non-empty and equally long")
        if np.any(np.diff(e) <= 0) or e[0] <= 0:
            raise ValueError("energies must be positive and ascending")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "energies_kev", e)
        object.__setattr__(self, "weights", w)

    @classmethod
    def monoenergetic(cls, energy_kev: float) -> "Spectrum":
        return cls(np.array([float(energy_kev)]), np.array([1.0]))

    @property
    def mean_energy(self) -> float:
        return float(self.weights @ self.energies_kev)

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c


def build_spectrum(kvp: float, n_bins: int = 8) -> Spectrum:
    """Kramers-shaped spectrum (kvp - E) * E on [20 keV, kvp] in equal-width bins.

    Each bin is represented by its weighted mean energy; weights are the
    exact bin integrals of the shape, normalized.
    """
    if not 40.0 <= kvp <= 150.0:
        raise ValueError(f"kvp {kvp} outside [40, 150]")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    edges = np.linspace(SPECTRUM_MIN_KEV, kvp, n_bins + 1)
    F = kvp * edges ** 2 / 2 - edges ** 3 / 3
    G = kvp * edges ** 3 / 3 - edges ** 4 / 4
    mass = np.diff(F)
    energies = np.diff(G) / mass
    return Spectrum(energies, mass / mass.sum())


@dataclass(frozen=True, eq=False)
class AttenuationTable:
    """Linear attenuation (1/mm) per material on an energy grid, with
    photoelectric / Compton / Rayleigh fractions for transport."""
    energies_kev: np.ndarray
    mu: np.ndarray  # (4, n_energies)
    photo_frac: np.ndarray
    rayleigh_frac: np.ndarray

    @property
    def compton_frac(self) -> np.ndarray:
        return 1.0 - self.photo_frac - self.rayleigh_frac

    def mu_at(self, energies) -> np.ndarray:
        """(4, len(energies)) linear attenuation at the given energies."""
        energies = np.atleast_1d(np.asarray(energies, dtype=np.float64))
        lo, hi = self.energies_kev[0], self.energies_kev[-1]
        if np.any(energies < lo - 1e-9) or np.any(energies > hi + 1e-9):
            raise ValueError(f"energy outside table range [{lo}, {hi}] keV")
        return np.stack([np.interp(energies, self.energies_kev, row) for row in self.mu])

    def with_vacuum_air(self) -> "AttenuationTable":
        mu = self.mu.copy()
        mu[Material.AIR] = 0.0
        return AttenuationTable(self.energies_kev, mu, self.photo_frac, self.rayleigh_frac)

    def with_fractions(self, photo=None, rayleigh=None) -> "AttenuationTable":
        """Override interaction fractions for every material (e.g. photo=1 for
        scatter-free transport)."""
        pf = self.photo_frac if photo is None else np.full_like(self.photo_frac, photo)
        rf = self.rayleigh_frac if rayleigh is None else np.full_like(self.rayleigh_frac, rayleigh)
        if photo is not None and rayleigh is None:
            rf = np.minimum(rf, 1.0 - pf)
        return AttenuationTable(self.energies_kev, self.mu, pf, rf)


def default_table() -> AttenuationTable:
    e = ENERGY_GRID_KEV
    mu = np.zeros((4, e.size))
    pf = np.zeros((4, e.size))
    rf = np.zeros((4, e.size))
    for m in Material:
        rho, mass = _MASS_ATT[m]
        mu[m] = _loglog(_NODES, mass, e) * rho / 10.0  # cm^-1 -> mm^-1
        pe, ra = _FRACTIONS[m]
        pf[m] = np.interp(e, _NODES, pe)
        rf[m] = np.interp(e, _NODES, ra)
    return AttenuationTable(e, mu, pf, rf)


def mu_lookup(table: AttenuationTable, material: int, energy_kev: float) -> float:
    """Piecewise-linear interpolation of one material's attenuation."""
    return float(table.mu_at([energy_kev])[int(material), 0])


def mu_water(table: AttenuationTable, spectrum: Spectrum) -> float:
    """Reference attenuation for HU conversion: soft tissue at the mean energy."""
    return mu_lookup(table, Material.SOFT_TISSUE, spectrum.mean_energy)


def compton_energy(e_kev, cos_theta):
    return e_kev / (1.0 + (e_kev / ELECTRON_REST_KEV) * (1.0 - cos_theta))
