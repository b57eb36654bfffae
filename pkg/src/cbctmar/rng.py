"""Seed derivation for the counter-based generators.

Every random stream is addressed by (seed, stream id). Primary-beam noise
uses numpy's Philox bit generator keyed with the derived value; Monte Carlo
histories use the in-kernel Philox2x32-10 keyed with its low 32 bits.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive(seed: int, *ids: int) -> int:
    """64-bit key for stream ``ids`` under ``seed``."""
    k = splitmix64(int(seed) & _MASK64)
    for i in ids:
        k = splitmix64(k ^ (int(i) & _MASK64))
    return k


def generator(seed: int, *ids: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive(seed, *ids)))


def key32(seed: int, *ids: int) -> int:
    return derive(seed, *ids) & 0xFFFFFFFF
