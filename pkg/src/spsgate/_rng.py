"""Seed derivation: every stochastic stage gets its own stream keyed by name."""

import zlib

import numpy as np


def _entropy(seed, keys):
    if isinstance(seed, (bool, np.bool_)) or int(seed) != seed or seed < 0:
        raise ValueError("seed must be a non-negative integer")
    return [int(seed)] + [zlib.crc32(str(k).encode()) for k in keys]


def make_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed, keys))))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed derived from ``seed`` and ``keys``."""
    state = np.random.SeedSequence(_entropy(seed, keys)).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])
