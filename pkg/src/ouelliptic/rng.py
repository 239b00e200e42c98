"""Deterministic substreams on top of the Philox counter-based generator.

Every stochastic routine in the package derives its randomness from
``substream(seed, *ids)``.  The ids are mixed into the second word of the
Philox key, so two calls with the same (seed, ids) give bit-identical
streams no matter when or on which thread they run.
"""
from __future__ import annotations

import numpy as np

# tag values keep the main stream families from colliding
PATH_TAG = 0x50415448      # per-path diffusion noise
TAIL_TAG = 0x5441494C      # frozen Galerkin tail samples
NORM_TAG = 0x4E4F524D      # importance-sampling clouds
MISC_TAG = 0x4D495343

_MULT = 6364136223846793005
_INC = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def mix64(*ids: int) -> int:
    """Fold a tuple of integers into a single 64-bit word."""
    acc = 0
    for part in ids:
        acc = (acc * _MULT + (int(part) & _MASK) + _INC) & _MASK
    return acc


def substream(seed: int, *ids: int) -> np.random.Generator:
    """Generator for the (seed, *ids) stream; same arguments, same stream."""
    key = np.array([int(seed) & _MASK, mix64(*ids)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def path_stream(seed: int, path_index: int) -> np.random.Generator:
    """Noise stream for one diffusion path, independent of execution order."""
    return substream(seed, PATH_TAG, path_index)
