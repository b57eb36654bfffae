"""Procedural phantoms: a soft-tissue torso section with bones and metal
implants (screws, pins, spheres, plates), plus the out-of-FOV and
water-cylinder scenes used for checks."""
from __future__ import annotations

import numpy as np

from .volume import (HU_BONE, HU_SOFT_TISSUE, HU_STEEL, HU_TITANIUM, Box, CappedCylinder,
                     EllipticCylinder, Grid, PhantomSpec, Sphere)


def random_body(gen: np.random.Generator, half_height: float = 200.0) -> list:
    rx, ry = gen.uniform(46, 58), gen.uniform(34, 46)
    body = [EllipticCylinder(HU_SOFT_TISSUE, (0.0, 0.0, 0.0), rx=rx, ry=ry,
                             half_height=half_height, angle_deg=gen.uniform(-10, 10))]
    # spine-like bone column plus a few smaller bones
    body.append(EllipticCylinder(HU_BONE, (gen.uniform(-5, 5), gen.uniform(-ry / 2, -ry / 4), 0.0),
                                 rx=gen.uniform(9, 14), ry=gen.uniform(7, 11),
                                 half_height=half_height, angle_deg=gen.uniform(-20, 20)))
    for _ in range(int(gen.integers(1, 3))):
        ang = gen.uniform(0, 2 * np.pi)
        r = gen.uniform(0.45, 0.7)
        body.append(EllipticCylinder(HU_BONE * gen.uniform(0.7, 1.3),
                                     (r * rx * np.cos(ang), r * ry * np.sin(ang), gen.uniform(-10, 10)),
                                     rx=gen.uniform(4, 8), ry=gen.uniform(4, 8),
                                     half_height=gen.uniform(20, 60), angle_deg=gen.uniform(0, 180)))
    return body


def random_metal(gen: np.random.Generator, n: int, xy_radius: float = 28.0, z_half: float = 24.0) -> list:
    inserts = []
    for _ in range(n):
        kind = int(gen.integers(0, 4))
        hu = HU_TITANIUM if gen.random() < 0.6 else HU_STEEL
        ang = gen.uniform(0, 2 * np.pi)
        r = xy_radius * np.sqrt(gen.uniform(0, 1))
        c = (r * np.cos(ang), r * np.sin(ang), gen.uniform(-z_half, z_half))
        if kind == 0:  # screw
            d = gen.normal(size=3)
            inserts.append(CappedCylinder(hu, c, radius=gen.uniform(2.0, 3.5),
                                          half_length=gen.uniform(8, 18), axis=tuple(d)))
        elif kind == 1:  # pin along z
            inserts.append(CappedCylinder(hu, c, radius=gen.uniform(2.0, 3.0),
                                          half_length=gen.uniform(10, 20), axis=(0.0, 0.0, 1.0)))
        elif kind == 2:  # bead
            inserts.append(Sphere(hu, c, radius=gen.uniform(3.0, 6.0)))
        else:  # plate
            inserts.append(Box(hu, c, half_size=(gen.uniform(6, 12), gen.uniform(1.5, 2.5), gen.uniform(5, 12)),
                               angle_deg=gen.uniform(0, 180)))
    return inserts


def random_phantom(seed: int, with_metal: bool = True, n_metal: tuple[int, int] = (1, 3)) -> PhantomSpec:
    gen = np.random.default_rng(seed)
    body = random_body(gen)
    metal = random_metal(gen, int(gen.integers(n_metal[0], n_metal[1] + 1))) if with_metal else []
    return PhantomSpec(body, metal)


def out_of_fov_phantom(seed: int, recon_grid: Grid, margin_mm: float = 6.0) -> PhantomSpec:
    """Body with one metal implant placed just above the reconstruction grid
    (``out_of_fov_offset_mm`` lifts it past the top face)."""
    gen = np.random.default_rng(seed)
    body = random_body(gen)
    radius = 4.0
    top = float(recon_grid.hi[2])
    metal = [Sphere(HU_TITANIUM, (gen.uniform(-15, 15), gen.uniform(-10, 10), 0.0), radius=radius),
             CappedCylinder(HU_STEEL, (gen.uniform(-15, 15), gen.uniform(5, 15), 0.0), radius=2.5,
                            half_length=10.0, axis=(1.0, 0.3, 0.0))]
    return PhantomSpec(body, metal, (0.0, 0.0, top + margin_mm))


def water_cylinder(radius: float = 40.0, half_height: float = 200.0) -> PhantomSpec:
    return PhantomSpec([EllipticCylinder(0.0, (0.0, 0.0, 0.0), rx=radius, ry=radius, half_height=half_height)])
