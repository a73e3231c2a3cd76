"""Counter-based random streams.

Each ``(seed, purpose)`` gets its own Philox key and each iteration its own
counter block, so a draw made for one purpose never shifts the draws of
another. Adding a new diagnostic stream cannot perturb training.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(seed: int, purpose: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{purpose}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


class Streams:
    """Factory of independent generators keyed by ``(purpose, iteration)``."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def get(self, purpose: str, iteration: int = 0) -> np.random.Generator:
        # counter word 3 carries the iteration; the low words are left for draws
        counter = np.array([0, 0, 0, int(iteration)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=_key(self.seed, purpose), counter=counter))

    def __repr__(self) -> str:
        return f"Streams(seed={self.seed})"
