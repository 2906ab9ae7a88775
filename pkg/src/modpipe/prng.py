"""Keyed 64-bit split-mix generator.

All keyed randomness in the watermark codecs (pixel selection, bit
patterns, coefficient signs, attack noise) is derived from splitmix64
with the reference constants, so two implementations given the same key
produce identical streams. Scalar and numpy-vectorized forms share the
same finalizer.

Constants (Steele, Lea & Flood's SplitMix64):
    increment  0x9E3779B97F4A7C15
    mix mul 1  0xBF58476D1CE4E5B9  (shift 30)
    mix mul 2  0x94D049BB133111EB  (shift 27, then 31)
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer over one 64-bit word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64(seed: int):
    """Infinite stream of 64-bit outputs from the given seed."""
    state = seed & MASK64
    while True:
        state = (state + GOLDEN) & MASK64
        yield mix64(state)


def keyed_hash(key: int, *words: int) -> int:
    """Deterministic 64-bit hash of (key, words...).

    Each word is folded in via the splitmix64 finalizer; this is the
    scalar reference for the vectorized grid hash below.
    """
    h = mix64((key + GOLDEN) & MASK64)
    for w in words:
        h = mix64((h ^ (w & MASK64)) + GOLDEN)
    return h


def uniform01(key: int, *words: int) -> float:
    """Deterministic uniform draw in [0, 1) keyed by (key, words...)."""
    return keyed_hash(key, *words) / 2.0**64


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def hash_grid(key: int, tag: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized keyed_hash(key, tag, x, y) over coordinate arrays.

    Bit-identical to the scalar form; uint64 arithmetic wraps mod 2^64.
    """
    old = np.seterr(over="ignore")
    try:
        h = np.uint64(keyed_hash(key, tag))
        hx = _mix64_vec((h ^ xs.astype(np.uint64)) + np.uint64(GOLDEN))
        return _mix64_vec((hx ^ ys.astype(np.uint64)) + np.uint64(GOLDEN))
    finally:
        np.seterr(**old)
