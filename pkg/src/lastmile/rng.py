"""Deterministic named RNG substreams.

Every stochastic component draws from its own child generator keyed by
(seed, path...), so changing how one distribution is sampled never shifts the
draws seen by any other component under the same seed.
"""
from __future__ import annotations

import zlib

import numpy as np


def _code(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Child generator for (seed, *path); stable across runs and platforms."""
    entropy = [int(seed) & 0xFFFFFFFF] + [_code(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
