"""Seeded random streams.

Every consumer draws from its own named sub-stream of the run seed, so adding
a new consumer never shifts the draws of an existing one.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "arrivals": 0,
    "sampling": 1,
    "ties": 2,
    "service": 3,
    "graph": 4,
}


def bit_generator(seed: int, stream: str, *extra: int) -> np.random.PCG64:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[stream], *extra))
    return np.random.PCG64(ss)


def generator(seed: int, stream: str, *extra: int) -> np.random.Generator:
    return np.random.Generator(bit_generator(seed, stream, *extra))
