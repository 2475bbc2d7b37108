"""Counter-based random streams for reproducible ensembles.

Every stochastic component draws from a Philox counter-based generator keyed
by ``(master seed, stream ids...)``.  Streams with distinct ids are
statistically independent and reproducible regardless of scheduling, so
replicas can run in any order (or in parallel) and still produce identical
ensembles for a given master seed.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One step of the splitmix64 sequence; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def fold_ids(*ids: int) -> int:
    """Mix an arbitrary tuple of integers into a single 64-bit word."""
    state = 0x243F6A8885A308D3
    out = 0
    for value in ids:
        state, word = _splitmix64(state ^ (int(value) & _MASK64))
        out ^= word
    return out & _MASK64


def stream(master_seed: int, *ids: int) -> np.random.Generator:
    """Return the generator for stream ``ids`` under ``master_seed``.

    The Philox key is ``(master_seed, fold(ids))``; equal arguments always
    yield the identical stream.
    """
    key = np.array([int(master_seed) & _MASK64, fold_ids(*ids)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
