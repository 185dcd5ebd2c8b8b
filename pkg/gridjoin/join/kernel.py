"""Per-point range-query kernel.

Every query point looks up the non-empty cells around its own cell and tests each
candidate with the full n-dimensional squared distance against eps^2. Two filters can be
switched on:

* ``sortidu`` - within a cell, only candidates whose ``u`` coordinate lies within eps of
  the query's are tested; the window is located by binary search over the u-sorted cell.
* ``shortc`` - the squared-distance accumulation stops as soon as it exceeds eps^2.

The kernel runs in two passes over the query ids: a counting pass, then a fill pass that
writes each query's neighbors at its prefix-summed offset. Output order is therefore fixed
(query id, then cell enumeration order, then u order) whatever the thread count.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numba
import numpy as np
from numba import njit, prange

from gridjoin.data.dataset import Dataset
from gridjoin.errors import BufferOverflowError, ConfigError
from gridjoin.index.grid import (
    GridIndex,
    GridParams,
    _advance_offsets,
    _find_cell,
    _offset_cell_id,
    _point_cell,
)

logger = logging.getLogger(__name__)

# columns of the per-query statistics matrix
DIST_TESTS = 0
CELLS_VISITED = 1
SEARCH_PROBES = 2
MAC_STEPS = 3
SHORTC_EXITS = 4
N_STATS = 5


@dataclass(frozen=True)
class KernelConfig:
    """Search radius and filter switches; ``eps_squared`` is eps*eps in float32."""
    epsilon: float
    sortidu: bool = False
    shortc: bool = False
    eps_squared: np.float32 = field(init=False, repr=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        eps = np.float32(self.epsilon)
        object.__setattr__(self, "eps_squared", np.float32(eps * eps))


@dataclass
class WorkCounters:
    """Work done by one or more kernel runs."""
    distance_tests: int = 0
    cells_visited: int = 0
    search_probes: int = 0
    mac_steps: int = 0
    shortc_exits: int = 0

    @classmethod
    def from_stats(cls, stats: np.ndarray) -> "WorkCounters":
        totals = stats.sum(axis=0) if stats.size else np.zeros(N_STATS, dtype=np.int64)
        return cls(
            distance_tests=int(totals[DIST_TESTS]),
            cells_visited=int(totals[CELLS_VISITED]),
            search_probes=int(totals[SEARCH_PROBES]),
            mac_steps=int(totals[MAC_STEPS]),
            shortc_exits=int(totals[SHORTC_EXITS]),
        )

    def __add__(self, other: "WorkCounters") -> "WorkCounters":
        return WorkCounters(
            distance_tests=self.distance_tests + other.distance_tests,
            cells_visited=self.cells_visited + other.cells_visited,
            search_probes=self.search_probes + other.search_probes,
            mac_steps=self.mac_steps + other.mac_steps,
            shortc_exits=self.shortc_exits + other.shortc_exits,
        )

    def as_dict(self) -> Dict[str, int]:
        return {
            "distance_tests": self.distance_tests,
            "cells_visited": self.cells_visited,
            "search_probes": self.search_probes,
            "mac_steps": self.mac_steps,
            "shortc_exits": self.shortc_exits,
        }


@dataclass(eq=False)
class PairBuffer:
    """Key/value result of one kernel run.

    ``counts[i]`` neighbors of ``query_ids[i]`` sit contiguously in ``neighbor_ids``, in
    query order.
    """
    query_ids: np.ndarray
    counts: np.ndarray
    neighbor_ids: np.ndarray
    counters: WorkCounters = field(default_factory=WorkCounters)

    @property
    def count(self) -> int:
        return int(self.neighbor_ids.shape[0])

    @property
    def keys(self) -> np.ndarray:
        return np.repeat(self.query_ids, self.counts)

    @property
    def pairs(self) -> np.ndarray:
        """``(count, 2)`` array of (query id, neighbor id)."""
        return np.stack([self.keys, self.neighbor_ids], axis=1)


@njit(nogil=True, cache=True)
def _within(apoints, a, bpoints, b, eps2, shortc):
    """Squared distance test; returns (within, multiply-adds done, stopped early)."""
    acc = np.float32(0.0)
    n = apoints.shape[1]
    for j in range(n):
        d = apoints[a, j] - bpoints[b, j]
        acc += d * d
        if shortc and acc > eps2:
            return False, j + 1, True
    return acc <= eps2, n, False


@njit(nogil=True, cache=True)
def _query(qpoints, pid, epoints, lookup, lookup_u, cell_ids, cell_ranges, origin, epsilon,
           widths, strides, u_dim, eps2, sortidu, shortc, stats, out, base, write):
    k = widths.shape[0]
    coords = np.empty(k, np.int64)
    _point_cell(qpoints[pid], origin, epsilon, widths, coords)
    offsets = np.full(k, -1, np.int64)
    pu = qpoints[pid, u_dim]
    found = 0
    for _ in range(3 ** k):
        cid = _offset_cell_id(coords, offsets, widths, strides)
        _advance_offsets(offsets)
        if cid < 0:
            continue
        handle, probes = _find_cell(cell_ids, cid)
        stats[SEARCH_PROBES] += probes
        if handle < 0:
            continue
        stats[CELLS_VISITED] += 1
        start = cell_ranges[handle, 0]
        end = cell_ranges[handle, 1]
        t = start
        if sortidu:
            # first slot whose u is within eps of pu (or above it)
            lo = start
            hi = end
            while lo < hi:
                mid = (lo + hi) >> 1
                stats[SEARCH_PROBES] += 1
                v = lookup_u[mid]
                dv = pu - v
                if v >= pu or dv * dv <= eps2:
                    hi = mid
                else:
                    lo = mid + 1
            t = lo
        while t < end:
            if sortidu:
                v = lookup_u[t]
                dv = v - pu
                if v > pu and dv * dv > eps2:
                    break
            q = lookup[t]
            stats[DIST_TESTS] += 1
            ok, macs, early = _within(qpoints, pid, epoints, q, eps2, shortc)
            stats[MAC_STEPS] += macs
            if early:
                stats[SHORTC_EXITS] += 1
            if ok:
                if write:
                    out[base + found] = q
                found += 1
            t += 1
    return found


def _count_impl(qids, qpoints, epoints, lookup, lookup_u, cell_ids, cell_ranges, origin,
                epsilon, widths, strides, u_dim, eps2, sortidu, shortc):
    m = qids.shape[0]
    counts = np.zeros(m, np.int64)
    stats = np.zeros((m, N_STATS), np.int64)
    dummy = np.empty(0, np.int64)
    for i in prange(m):
        counts[i] = _query(qpoints, qids[i], epoints, lookup, lookup_u, cell_ids, cell_ranges,
                           origin, epsilon, widths, strides, u_dim, eps2, sortidu, shortc,
                           stats[i], dummy, 0, False)
    return counts, stats


def _fill_impl(qids, qpoints, epoints, lookup, lookup_u, cell_ids, cell_ranges, origin,
               epsilon, widths, strides, u_dim, eps2, sortidu, shortc, offsets, out):
    m = qids.shape[0]
    scratch = np.zeros((m, N_STATS), np.int64)
    for i in prange(m):
        _query(qpoints, qids[i], epoints, lookup, lookup_u, cell_ids, cell_ranges, origin,
               epsilon, widths, strides, u_dim, eps2, sortidu, shortc, scratch[i], out,
               offsets[i], True)


# Thread-parallel variants for a single caller; the serial variants release the GIL so
# several Python threads can each run their own kernel. No on-disk cache here: both
# variants share one function and the cache index does not tell them apart.
_count_parallel = njit(parallel=True, nogil=True)(_count_impl)
_fill_parallel = njit(parallel=True, nogil=True)(_fill_impl)
_count_serial = njit(nogil=True)(_count_impl)
_fill_serial = njit(nogil=True)(_fill_impl)


def set_threads(threads: Optional[int]) -> int:
    """Cap the kernel worker count; 0 or None means every available core."""
    limit = numba.config.NUMBA_NUM_THREADS
    resolved = limit if not threads else max(1, min(int(threads), limit))
    numba.set_num_threads(resolved)
    return resolved


def _query_ids(batch: Union[range, Sequence[int], np.ndarray], count: int) -> np.ndarray:
    if isinstance(batch, range):
        qids = np.arange(batch.start, batch.stop, batch.step, dtype=np.int64)
    else:
        qids = np.ascontiguousarray(batch, dtype=np.int64)
    if qids.size and (qids.min() < 0 or qids.max() >= count):
        raise ValueError(f"query ids must lie in [0, {count})")
    return qids


def _kernel_args(qids, d, g, gp, cfg, entries):
    if gp.n != d.dims:
        raise ConfigError(f"grid expects {gp.n} dimensions, dataset has {d.dims}")
    epoints = d.points if entries is None else entries.points
    return (qids, d.points, epoints, g.point_lookup, g.lookup_u, g.cell_ids, g.cell_ranges,
            gp.origin, gp.epsilon, gp.widths, gp.strides, g.u_dim, cfg.eps_squared,
            cfg.sortidu, cfg.shortc)


def count_neighbors(batch, d: Dataset, g: GridIndex, gp: GridParams, cfg: KernelConfig,
                    entries: Optional[Dataset] = None, parallel: bool = True):
    """Counting pass only: per-query neighbor counts and work counters, no pairs.

    Returns:
        ``(query_ids, counts, counters)``.
    """
    qids = _query_ids(batch, d.count)
    counter = _count_parallel if parallel else _count_serial
    counts, stats = counter(*_kernel_args(qids, d, g, gp, cfg, entries))
    return qids, counts, WorkCounters.from_stats(stats)


def run_kernel(batch, d: Dataset, g: GridIndex, gp: GridParams, cfg: KernelConfig,
               capacity: Optional[int] = None, entries: Optional[Dataset] = None,
               entry_ids: Optional[np.ndarray] = None, parallel: bool = True) -> PairBuffer:
    """Find every neighbor within eps of each query id in ``batch``.

    Args:
        batch: Query ids, as a ``range`` or an integer array.
        d: Dataset the query ids refer to.
        g: Index over the entry points (``d`` itself for a self-join).
        gp: Grid geometry shared by queries and entries.
        cfg: Radius and filter switches.
        capacity: Result slots available; exceeding it raises ``BufferOverflowError``
            before any pair is written.
        entries: Entry points when they are not ``d`` (a stripe of ``d``).
        entry_ids: Global ids of ``entries`` rows, used to translate neighbor ids.
        parallel: Use numba's thread pool. Pass False when several Python threads run
            kernels at once.

    Returns:
        The batch's ``PairBuffer``.
    """
    args = _kernel_args(_query_ids(batch, d.count), d, g, gp, cfg, entries)
    counter, filler = (_count_parallel, _fill_parallel) if parallel \
        else (_count_serial, _fill_serial)
    counts, stats = counter(*args)
    total = int(counts.sum())
    if capacity is not None and total > capacity:
        raise BufferOverflowError(required=total, capacity=int(capacity))
    offsets = np.zeros(counts.shape[0], dtype=np.int64)
    if counts.shape[0] > 1:
        np.cumsum(counts[:-1], out=offsets[1:])
    out = np.empty(total, dtype=np.int64)
    filler(*args, offsets, out)
    if entry_ids is not None:
        out = np.asarray(entry_ids, dtype=np.int64)[out]
    return PairBuffer(query_ids=args[0], counts=counts, neighbor_ids=out,
                      counters=WorkCounters.from_stats(stats))


def query_point(pid: int, d: Dataset, g: GridIndex, gp: GridParams,
                cfg: KernelConfig) -> np.ndarray:
    """Ids of every point within eps of point ``pid``, itself included."""
    return run_kernel(range(pid, pid + 1), d, g, gp, cfg, parallel=False).neighbor_ids


def dist_within(a: Sequence[float], b: Sequence[float], cfg: KernelConfig,
                counters: Optional[WorkCounters] = None) -> bool:
    """True iff the squared distance of ``a`` and ``b`` is at most eps^2."""
    rows = np.ascontiguousarray(np.stack([np.asarray(a, np.float32),
                                          np.asarray(b, np.float32)]))
    ok, macs, early = _within(rows, 0, rows, 1, cfg.eps_squared, cfg.shortc)
    if counters is not None:
        counters.distance_tests += 1
        counters.mac_steps += int(macs)
        counters.shortc_exits += int(early)
    return bool(ok)
