"""Keyed random streams.

Every stochastic step draws from ``stream(seed, *keys)``: a PCG64 generator
seeded by numpy's SeedSequence with ``keys`` as spawn key. The same
(seed, keys) always gives the same stream, no matter which worker or in which
order jobs run, so there is no global RNG state anywhere in the package.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("stream keys must be non-negative")
        return int(k)
    return zlib.crc32(str(k).encode())


def stream(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(rng: np.random.Generator) -> int:
    """A 32-bit seed for libraries that only take integers (e.g. sklearn)."""
    return int(rng.integers(0, 2**31 - 1))
