"""Reproducible, splittable random streams.

Every stream is a Philox4x64 counter-based generator whose key is derived
from ``(seed, path)`` through numpy's ``SeedSequence``. Child streams are
obtained with :meth:`RngStream.split`, so a replicate or a single matrix
always sees the same numbers no matter how work is scheduled.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64/seedsequence"
ALGORITHM_VERSION = 1


class RngStream:
    """A random stream identified by a 64-bit seed and a split path."""

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def split(self, child_index: int) -> "RngStream":
        """Independent child stream; does not consume draws from ``self``."""
        if child_index < 0:
            raise ValueError("child_index must be nonnegative")
        return RngStream(self.seed, self.path + (child_index,))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    # thin passthroughs used throughout the package
    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def chisquare(self, df, size=None):
        return self._gen.chisquare(df, size)

    def permutation(self, n: int) -> np.ndarray:
        # Fisher-Yates on top of the stream's bounded integers
        p = np.arange(n)
        if n > 1:
            js = self._gen.integers(0, np.arange(n, 0, -1))
            for i, j in enumerate(js):
                j = i + int(j)
                p[i], p[j] = p[j], p[i]
        return p

    def describe(self) -> dict:
        return {
            "algorithm": ALGORITHM,
            "version": ALGORITHM_VERSION,
            "seed": self.seed,
            "path": list(self.path),
        }

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
