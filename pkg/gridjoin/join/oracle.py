"""Nested-loop self-join used as ground truth.

The distance test is the kernel's own ``_within`` with short-circuiting off, so points at
exactly eps from each other are classified the same way by both.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit, prange

from gridjoin.data.dataset import Dataset
from gridjoin.errors import OracleSizeError
from gridjoin.join.batching import NeighborTable
from gridjoin.join.kernel import KernelConfig, _within

logger = logging.getLogger(__name__)

SIZE_GUARD = 100_000


@njit(parallel=True, nogil=True, cache=True)
def _nested_counts(points, eps2):
    m = points.shape[0]
    counts = np.zeros(m, np.int64)
    for a in prange(m):
        c = 0
        for b in range(m):
            ok, _, _ = _within(points, a, points, b, eps2, False)
            if ok:
                c += 1
        counts[a] = c
    return counts


@njit(parallel=True, nogil=True, cache=True)
def _nested_fill(points, eps2, offsets, out):
    m = points.shape[0]
    for a in prange(m):
        pos = offsets[a]
        for b in range(m):
            ok, _, _ = _within(points, a, points, b, eps2, False)
            if ok:
                out[pos] = b
                pos += 1


@dataclass(eq=False)
class OraclePairs:
    """Every (a, b) pair within eps, sorted lexicographically."""
    pairs: np.ndarray
    count: int

    @property
    def total_pairs(self) -> int:
        return int(self.pairs.shape[0])

    def to_table(self) -> NeighborTable:
        return NeighborTable.from_pairs(self.count, self.pairs)

    def matches(self, other: Union[NeighborTable, "OraclePairs", np.ndarray]) -> bool:
        """True iff ``other`` holds exactly the same pair set."""
        if isinstance(other, NeighborTable):
            theirs = other.sorted_pairs()
        elif isinstance(other, OraclePairs):
            theirs = other.pairs
        else:
            theirs = np.asarray(other, dtype=np.int64).reshape(-1, 2)
            theirs = theirs[np.lexsort((theirs[:, 1], theirs[:, 0]))]
        return np.array_equal(self.pairs, theirs)


def brute_join(d: Dataset, epsilon: float, guard: int = SIZE_GUARD) -> OraclePairs:
    """All ordered pairs with squared distance at most eps^2, self pairs included.

    Raises:
        OracleSizeError: ``d`` has more than ``guard`` points.
    """
    if d.count > guard:
        raise OracleSizeError(f"brute-force join limited to {guard} points, got {d.count}")
    eps2 = KernelConfig(epsilon).eps_squared
    counts = _nested_counts(d.points, eps2)
    offsets = np.zeros(d.count, dtype=np.int64)
    if d.count > 1:
        np.cumsum(counts[:-1], out=offsets[1:])
    out = np.empty(int(counts.sum()), dtype=np.int64)
    _nested_fill(d.points, eps2, offsets, out)
    keys = np.repeat(np.arange(d.count, dtype=np.int64), counts)
    logger.debug("Oracle found %d pairs over %d points", out.shape[0], d.count)
    # rows come out grouped by a with b ascending, already lexicographic
    return OraclePairs(pairs=np.stack([keys, out], axis=1), count=d.count)
