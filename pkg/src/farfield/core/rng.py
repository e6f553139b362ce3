from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SeededRng:
    """Named random stream derived from a master seed.

    The stream is a pure function of ``(master_seed, stream_id)``, so
    independent work items (files, utterances) can be processed in any order
    or in parallel and still draw the same numbers.
    """

    master_seed: int
    stream_id: str = ""

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")

    def _entropy(self) -> list[int]:
        digest = hashlib.sha256(
            f"{int(self.master_seed)}\x00{self.stream_id}".encode("utf-8")
        ).digest()
        return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._entropy())))

    def derive(self, name: str) -> "SeededRng":
        sep = "/" if self.stream_id else ""
        return SeededRng(self.master_seed, f"{self.stream_id}{sep}{name}")
