"""Seeded random streams for simulations and replica sweeps.

All randomness goes through numpy's PCG64 bit generator, whose output is
identical across platforms for a given integer seed. Replica streams are
derived from a base seed with the splitmix64 finalizer::

    seed(base, lam, r) = mix64(mix64(base ^ key(lam)) ^ r)

where ``key(lam)`` is the IEEE-754 bit pattern of ``float(lam)`` and ``mix64``
is splitmix64's output function. Distinct (lam, r) pairs give decorrelated
64-bit seeds, and the derivation does not depend on execution order.
"""

from __future__ import annotations

import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit unsigned integer."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _float_key(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def replica_seed(base_seed: int, lam: float, replica: int) -> int:
    """Seed for replica ``replica`` of the sweep point ``lam``."""
    if replica < 0:
        raise ValueError("replica id must be non-negative")
    inner = mix64((int(base_seed) & _MASK64) ^ _float_key(lam))
    return mix64(inner ^ replica)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
