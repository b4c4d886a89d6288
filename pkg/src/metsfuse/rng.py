"""Seedable random streams.

All randomness in the package flows from one integer seed through PCG64
generators. Derived streams are keyed by a path of labels so that, e.g.,
trial 3 / fold 2 of a grid search draws from the same stream no matter
what ran before it. String labels are hashed with crc32, which is stable
across platforms and Python versions.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_part(part: int | str) -> int:
    if isinstance(part, int):
        return part & 0xFFFFFFFF
    return zlib.crc32(part.encode("utf-8"))


def derived_rng(seed: int, *path: int | str) -> np.random.Generator:
    """PCG64 generator for the stream identified by (seed, *path)."""
    entropy = (int(seed) & 0xFFFFFFFF,) + tuple(_key_part(p) for p in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
