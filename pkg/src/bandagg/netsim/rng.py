"""Independent, seed-derived random streams.

Every consumer (workload classes, each link's drop process, probe timing) gets
its own stream keyed by name, so enabling one feature never shifts another's
draws.
"""
from __future__ import annotations

import random
import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode())


def seed_sequence(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(_key(name),))


def numpy_stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, name))


def scalar_stream(seed: int, name: str) -> random.Random:
    """Stdlib generator for per-packet draws, where it is cheaper than numpy."""
    state = seed_sequence(seed, name).generate_state(2, np.uint64)
    return random.Random(int(state[0]) << 64 | int(state[1]))
