"""Cumulative rate index: Fenwick (binary indexed) tree over per-site rates.

Supports O(log N) weight updates and inverse-cumulative sampling, with a
periodic full rebuild to keep floating-point drift of the maintained total
bounded.  The jitted primitives in :mod:`_kernels` do the actual tree work so
the same code path serves both the Python API and the event loops.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as k


class CumulativeRateIndex:
    """Binary-indexed cumulative sums of nonnegative per-site weights."""

    def __init__(self, weights):
        leaves = np.ascontiguousarray(weights, dtype=float)
        if leaves.ndim != 1 or leaves.size == 0:
            raise ValueError("weights must be a nonempty 1-D array")
        if np.any(leaves < 0.0):
            raise ValueError("weights must be nonnegative")
        self.leaves = leaves.copy()
        self.tree = np.zeros(leaves.size + 1, dtype=float)
        self._total = k.fw_build(self.tree, self.leaves)

    def __len__(self) -> int:
        return self.leaves.size

    @property
    def total(self) -> float:
        """Incrementally maintained total weight."""
        return self._total

    def weight(self, i: int) -> float:
        return float(self.leaves[i])

    def set_weight(self, i: int, w: float) -> None:
        if w < 0.0:
            raise ValueError("weights must be nonnegative")
        delta = w - self.leaves[i]
        self.leaves[i] = w
        k.fw_add(self.tree, i + 1, delta)
        self._total += delta

    def add(self, i: int, delta: float) -> None:
        self.set_weight(i, float(self.leaves[i] + delta))

    def prefix(self, i: int) -> float:
        """Sum of weights 0..i inclusive."""
        return float(k.fw_prefix(self.tree, i + 1))

    def sample(self, r: float) -> int:
        """Site u with cumulative weight bracketing r in [0, total)."""
        if not 0.0 <= r < self._total:
            raise ValueError("r must lie in [0, total)")
        return int(k._pick_site(self.tree, self.leaves, len(self), r))

    def rebuild(self) -> float:
        """Recompute the tree and total from the leaves; returns the new total."""
        self._total = k.fw_build(self.tree, self.leaves)
        return self._total

    def drift(self) -> float:
        """Relative disagreement between the maintained and recomputed totals."""
        exact = float(np.sum(self.leaves))
        if exact == 0.0:
            return abs(self._total)
        return abs(self._total - exact) / exact
