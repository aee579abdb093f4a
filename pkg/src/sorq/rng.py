"""Seeded random streams.

Every stream is a numpy ``Generator`` over the PCG64 bit generator, keyed by a
``SeedSequence(seed, spawn_key=...)``. Both algorithms are documented by numpy
and produce the same variates on every platform, so traces are reproducible.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1

# Sub-stream keys under one instance seed.
MDP_STREAM = 0
LEARNER_STREAM = 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return an independent PCG64 stream for ``seed`` and an optional stream path."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(stream))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *stream: int) -> int:
    """Derive a child 64-bit seed from ``seed`` and a stream path.

    The child depends only on ``(seed, stream)``, so adding more children
    never changes the ones already derived.
    """
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
