"""Seeded random streams.

All randomness goes through numpy's ``PCG64`` bit generator. Independent
streams are keyed by tuples of non-negative integers and built with
``numpy.random.SeedSequence``, whose entropy-mixing hash is stable across
numpy releases. Normal variates come from ``Generator.normal`` (ziggurat).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def _key(values) -> list[int]:
    return [int(v) & MASK64 for v in values]


def derive_seed(master: int, *keys: int) -> int:
    """Mix a master seed and integer keys into a new 64-bit seed."""
    seq = np.random.SeedSequence(_key((master, *keys)))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def stream(master: int, *keys: int) -> np.random.Generator:
    """Return a generator for the stream identified by ``(master, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_key((master, *keys)))))
