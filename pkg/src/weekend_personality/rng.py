"""Deterministic random streams.

Every random decision in the pipeline draws from a stream whose seed is derived
from a master seed and a tuple of integer keys, so results never depend on the
order in which independent jobs run.

Contract
--------
* Generator: SplitMix64 (Steele, Lea & Flood 2014). ``state += 0x9E3779B97F4A7C15``
  then the standard 30/27/31 xor-shift-multiply finaliser.
* Derivation: ``derive(seed, k1, ..., km)`` folds each key into the seed with
  ``h = mix(h ^ mix(k))`` where ``mix`` is one SplitMix64 step applied to its
  argument as the state. Strings are keyed through :func:`key_of`.
* Uniform doubles: ``(z >> 11) * 2**-53``; integer in ``[0, n)`` is
  ``floor(u * n)``.
* Python-level sampling (day selection, synthetic cohorts) uses
  ``numpy.random.Generator(PCG64(derived_seed))``.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix(x: int) -> int:
    """One SplitMix64 output for state ``x`` (the state is advanced first)."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def key_of(text: str) -> int:
    """Stable 64-bit key for a string (first 8 bytes of BLAKE2b, little endian)."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def derive(seed: int, *keys: int | str) -> int:
    h = mix(seed & MASK64)
    for k in keys:
        if isinstance(k, str):
            k = key_of(k)
        h = mix(h ^ mix(k & MASK64))
    return h


def generator(seed: int, *keys: int | str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive(seed, *keys)))


class SplitMix64:
    """Pure-Python reference stream; mirrors the compiled one used by the forest."""

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        out = mix(self.state)
        self.state = (self.state + GOLDEN) & MASK64
        return out

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        return int(self.uniform() * n)
