"""Deterministic counter-based random streams.

All randomness in the package flows through Philox4x64 generators keyed by
a ``(seed, *path)`` tuple via ``numpy.random.SeedSequence``.  Philox is
counter-based, so two streams with different paths never overlap, replicates
can run in any order or process and still produce identical output, and a
published seed fully determines every draw.

Path conventions (first path element):
  0  scenario generators   (``(seed, 0, replicate)``)
  1  permutation engine    (``(seed, 1, permutation_index)``)
  2  Monte-Carlo oracles used in the test suite
"""

from __future__ import annotations

import numpy as np

GENERATE = 0
PERMUTE = 1
ORACLE = 2

_MASK64 = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent Philox generator for the stream named by ``(seed, *path)``."""
    entropy = (int(seed) & _MASK64,) + tuple(int(p) & _MASK64 for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *path: int) -> int:
    """64-bit child seed deterministically derived from ``(seed, *path)``."""
    entropy = (int(seed) & _MASK64,) + tuple(int(p) & _MASK64 for p in path)
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
    return int(state[0])
