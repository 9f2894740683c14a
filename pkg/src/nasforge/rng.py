"""Named, splittable random streams derived from one integer seed.

Every consumer (data generation, weight init, architecture sampling, batch
order) draws from its own stream, so adding draws in one place never shifts
the numbers seen by another.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class Streams:
    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = tuple(path)

    def generator(self, name: str) -> np.random.Generator:
        """A fresh generator for `name`; the same name always gives the same stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self._path + (_key(name),))
        return np.random.default_rng(ss)

    def split(self, name: str) -> "Streams":
        """Child family of streams, independent of every sibling name."""
        return Streams(self.seed, self._path + (_key(name),))
