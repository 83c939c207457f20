"""Seeded random streams.

Scalar draws go through :class:`random.Random` because the training loops
pull one number at a time and the stdlib generator is several times faster
than a numpy ``Generator`` for that. Bulk sampling uses :meth:`RngStream.generator`.
"""

from __future__ import annotations

import random

import numpy as np


class RngStream:
    """Reproducible stream of draws; identical seeds give identical sequences."""

    __slots__ = ("seed", "_py")

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._py = random.Random(self.seed)

    def random(self) -> float:
        return self._py.random()

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self._py.random()

    def integers(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return int(self._py.random() * n)

    def spawn(self, key: int) -> "RngStream":
        """Independent child stream, a pure function of ``(seed, key)``."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(key),))
        return RngStream(int(ss.generate_state(1, dtype=np.uint64)[0]))

    def generator(self) -> np.random.Generator:
        """Numpy generator seeded from the next 64 bits of this stream."""
        return np.random.default_rng(self._py.getrandbits(64))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed})"
