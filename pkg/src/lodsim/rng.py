"""Reproducible random-number streams.

A stream is addressed by a 64-bit master seed plus a key of stream indices.
Distinct (seed, key) pairs yield statistically independent PCG64 streams and
the same pair always reproduces the identical draw sequence bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream"]


@dataclass(frozen=True)
class RngStream:
    seed: int
    key: tuple[int, ...] = field(default=())

    def child(self, index: int) -> "RngStream":
        """Derived stream for replicate/block ``index``; independent of self."""
        return RngStream(self.seed, self.key + (index,))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(ss))
