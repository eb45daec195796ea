"""Counter-based random streams.

Every random draw in the package comes from a Philox stream addressed by
``(seed, purpose, index)``.  The key is derived from the user seed and the
stream address lives in the high words of the 256-bit Philox counter, so the
stream for repetition ``i`` never depends on how many draws other repetitions
made.  This is what makes a parallel or partial curator loop reproduce the
sequential one bit for bit.
"""

from __future__ import annotations

import enum

import numpy as np

_MASK64 = (1 << 64) - 1


class Purpose(enum.IntEnum):
    """Namespaces separating independent uses of one seed."""

    DESCRIPTOR = 1
    NOISE = 2
    COUNT = 3
    HOLDOUT = 4
    DATA = 5
    QUERIES = 6
    TRIAL = 7
    TEST = 8


def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed) & _MASK64).generate_state(2, np.uint64)


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Return the generator for one ``(seed, purpose, index)`` address."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    counter = np.array([0, 0, int(purpose) & _MASK64, int(index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=_key(seed)))


def derive_seed(seed: int, *path: int) -> int:
    """Deterministically derive a child 64-bit seed, e.g. one per trial."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
