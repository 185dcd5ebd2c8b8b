"""Result-size estimation, batch planning and pipelined batch execution.

The pipeline keeps up to ``depth`` finished kernel buffers in flight: a producer thread
runs the kernel batch after batch while the calling thread folds each finished buffer
into the neighbor table. Buffers are handed over whole through a bounded queue.
"""

import logging
import math
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from gridjoin.data.dataset import Dataset
from gridjoin.errors import BufferOverflowError, ConfigError
from gridjoin.index.grid import GridIndex, GridParams
from gridjoin.join.kernel import (
    KernelConfig,
    PairBuffer,
    WorkCounters,
    count_neighbors,
    run_kernel,
)

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 100_000_000
MIN_BATCHES = 3
PAIR_FORMATS = ("text", "binary")


@dataclass(frozen=True)
class ResultEstimate:
    """Sampled estimate of the result size |R|."""
    total_pairs: int
    sample_pairs: int
    sample_size: int
    fraction: float
    distance_tests: int

    @property
    def mu(self) -> int:
        """Distance comparisons performed by the sampled queries."""
        return self.distance_tests


@dataclass(frozen=True)
class BatchPlan:
    """How the query ids are split into kernel batches."""
    est_total_pairs: int
    batch_size: int
    num_batches: int
    ranges: Tuple[range, ...] = ()


@dataclass(eq=False)
class NeighborTable:
    """Neighbors of every query point.

    The neighbors of point ``i`` are ``neighbor_ids[offsets[i]:offsets[i + 1]]``; the
    query id itself is implied by the position and never stored.
    """
    offsets: np.ndarray
    neighbor_ids: np.ndarray

    def __post_init__(self):
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        self.neighbor_ids = np.ascontiguousarray(self.neighbor_ids, dtype=np.int64)
        if self.offsets.ndim != 1 or self.offsets.shape[0] < 1 or self.offsets[0] != 0:
            raise ValueError("offsets must start at 0")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be non-decreasing")
        if self.offsets[-1] != self.neighbor_ids.shape[0]:
            raise ValueError("last offset must equal the number of neighbor ids")

    @property
    def count(self) -> int:
        return int(self.offsets.shape[0] - 1)

    @property
    def total_pairs(self) -> int:
        return int(self.neighbor_ids.shape[0])

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors(self, i: int) -> np.ndarray:
        return self.neighbor_ids[self.offsets[i]:self.offsets[i + 1]]

    def pairs(self) -> np.ndarray:
        """``(|R|, 2)`` array of (query id, neighbor id) in table order."""
        keys = np.repeat(np.arange(self.count, dtype=np.int64), self.counts)
        return np.stack([keys, self.neighbor_ids], axis=1)

    def sorted_pairs(self) -> np.ndarray:
        """Pairs in lexicographic order, for set comparisons."""
        pairs = self.pairs()
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    def identical(self, other: "NeighborTable") -> bool:
        """Byte-for-byte equality of both arrays."""
        return (np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.neighbor_ids, other.neighbor_ids))

    @classmethod
    def from_buffers(cls, count: int, buffers: Iterable[PairBuffer]) -> "NeighborTable":
        """Concatenate buffers that cover query ids ``0..count-1`` in ascending order."""
        builder = TableBuilder(count)
        for buf in buffers:
            builder.add(buf)
        return builder.finish()

    @classmethod
    def from_pairs(cls, count: int, pairs: np.ndarray,
                   sort_neighbors: bool = True) -> "NeighborTable":
        """Build a table from (query, neighbor) pairs in any order.

        With ``sort_neighbors`` the neighbors of each query come out ascending; otherwise
        they keep their input order.
        """
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= count):
            raise ValueError(f"pair ids must lie in [0, {count})")
        if sort_neighbors:
            order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        else:
            order = np.argsort(pairs[:, 0], kind="stable")
        offsets = np.zeros(count + 1, dtype=np.int64)
        np.cumsum(np.bincount(pairs[:, 0], minlength=count), out=offsets[1:])
        return cls(offsets=offsets, neighbor_ids=pairs[order, 1])

    def write_text(self, path: Union[str, Path]) -> Path:
        """One ``query: n1 n2 ...`` line per query point."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for i in range(self.count):
                f.write(f"{i}: {' '.join(map(str, self.neighbors(i).tolist()))}\n")
        return path

    def write_binary(self, path: Union[str, Path]) -> Path:
        """``|D|``, ``|R|``, the offsets, then the neighbor ids, all little-endian u32."""
        limit = np.iinfo(np.uint32).max
        if self.total_pairs > limit or self.count > limit:
            raise OverflowError("table too large for 32-bit offsets")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = np.array([self.count, self.total_pairs], dtype="<u4")
        with open(path, "wb") as f:
            for arr in (header, self.offsets.astype("<u4"), self.neighbor_ids.astype("<u4")):
                f.write(arr.tobytes())
        return path

    @classmethod
    def read_binary(cls, path: Union[str, Path]) -> "NeighborTable":
        raw = np.fromfile(path, dtype="<u4")
        if raw.shape[0] < 2:
            raise ValueError(f"{path} is not a neighbor table dump")
        count, total = int(raw[0]), int(raw[1])
        if raw.shape[0] != 2 + count + 1 + total:
            raise ValueError(f"{path} is truncated")
        return cls(offsets=raw[2:3 + count].astype(np.int64),
                   neighbor_ids=raw[3 + count:].astype(np.int64))

    def write(self, path: Union[str, Path], fmt: str = "text") -> Path:
        if fmt == "text":
            return self.write_text(path)
        if fmt == "binary":
            return self.write_binary(path)
        raise ConfigError(f"unknown pair format {fmt!r}, expected one of {PAIR_FORMATS}")


class TableBuilder:
    """Appends kernel buffers to a neighbor table as they arrive.

    Offsets are written in place and neighbor ids are copied into an array that grows
    by doubling, so each batch is folded in while the next one is still running.
    """

    def __init__(self, count: int, expected_pairs: int = 0):
        self.count = count
        self.offsets = np.zeros(count + 1, dtype=np.int64)
        self.ids = np.empty(max(int(expected_pairs), count, 1), dtype=np.int64)
        self.filled = 0

    @property
    def total_pairs(self) -> int:
        return int(self.offsets[self.filled])

    def add(self, buf: PairBuffer):
        n = buf.query_ids.size
        if n == 0:
            return
        if self.filled + n > self.count or not np.array_equal(
                buf.query_ids, np.arange(self.filled, self.filled + n)):
            raise ValueError("buffers must cover query ids contiguously in order")
        start = self.total_pairs
        stop = start + buf.neighbor_ids.shape[0]
        if stop > self.ids.shape[0]:
            grown = np.empty(max(stop, 2 * self.ids.shape[0]), dtype=np.int64)
            grown[:start] = self.ids[:start]
            self.ids = grown
        self.ids[start:stop] = buf.neighbor_ids
        np.cumsum(buf.counts, out=self.offsets[self.filled + 1:self.filled + n + 1])
        self.offsets[self.filled + 1:self.filled + n + 1] += start
        self.filled += n

    def finish(self) -> NeighborTable:
        if self.filled != self.count:
            raise ValueError(f"buffers cover {self.filled} query ids, expected {self.count}")
        return NeighborTable(offsets=self.offsets, neighbor_ids=self.ids[:self.total_pairs])


@dataclass
class PipelineStats:
    """Timing and work of one pipeline execution."""
    kernel_seconds: float = 0.0
    table_seconds: float = 0.0
    total_seconds: float = 0.0
    batches_run: int = 0
    retries: int = 0
    counters: WorkCounters = field(default_factory=WorkCounters)

    @property
    def overhead_fraction(self) -> float:
        """Share of the wall time not spent inside the kernel."""
        if self.total_seconds <= 0:
            return 0.0
        return max(0.0, 1.0 - self.kernel_seconds / self.total_seconds)


def estimate_result_size(d: Dataset, g: GridIndex, gp: GridParams, cfg: KernelConfig,
                         fraction: float = 0.01, seed: int = 0,
                         parallel: bool = True) -> ResultEstimate:
    """Count the neighbors of a uniform sample of query points and scale up.

    Only counts are computed; no pair is materialized.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("sample fraction must be in (0, 1]")
    size = min(d.count, math.ceil(fraction * d.count))
    if size < 1:
        raise ConfigError(f"a {fraction} sample of {d.count} points is empty")
    rng = np.random.default_rng(seed)
    sample = np.sort(rng.choice(d.count, size=size, replace=False))
    _, counts, counters = count_neighbors(sample, d, g, gp, cfg, parallel=parallel)
    sample_pairs = int(counts.sum())
    total = max(d.count, math.ceil(sample_pairs / fraction))
    logger.info("Estimated |R| = %d from %d sampled queries (%d pairs, f=%g)",
                total, size, sample_pairs, fraction)
    return ResultEstimate(total_pairs=total, sample_pairs=sample_pairs, sample_size=size,
                          fraction=fraction, distance_tests=counters.distance_tests)


def split_ranges(count: int, parts: int) -> Tuple[range, ...]:
    """Split ``0..count-1`` into ``parts`` contiguous ranges whose sizes differ by at most 1."""
    bounds = [i * count // parts for i in range(parts + 1)]
    return tuple(range(bounds[i], bounds[i + 1]) for i in range(parts))


def plan_batches(est_total_pairs: int, batch_size: int = DEFAULT_BATCH_SIZE,
                 min_batches: int = MIN_BATCHES, count: Optional[int] = None) -> BatchPlan:
    """Choose ``n_b = max(min_batches, ceil(est / b_s))`` and split the query ids.

    Args:
        est_total_pairs: Estimated result size.
        batch_size: Expected pairs per batch.
        min_batches: Lower bound on the batch count.
        count: Number of query points. When given, ``ranges`` holds the per-batch query
            id ranges.
    """
    if batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    if est_total_pairs < 0:
        raise ConfigError("estimated result size must be non-negative")
    num_batches = max(min_batches, -(-int(est_total_pairs) // int(batch_size)))
    ranges = split_ranges(count, num_batches) if count is not None else ()
    return BatchPlan(est_total_pairs=int(est_total_pairs), batch_size=int(batch_size),
                     num_batches=num_batches, ranges=ranges)


class _Producer(threading.Thread):
    """Runs kernel batches in query order, splitting any batch that overflows."""

    _DONE = object()

    def __init__(self, ranges, d, g, gp, cfg, capacity, out: queue.Queue):
        super().__init__(name="gridjoin-kernel", daemon=True)
        self.pending = deque(r for r in ranges if len(r))
        self.args = (d, g, gp, cfg)
        self.capacity = capacity
        self.out = out
        self.kernel_seconds = 0.0
        self.retries = 0
        self.error: Optional[BaseException] = None

    def next_buffer(self) -> Optional[PairBuffer]:
        while self.pending:
            batch = self.pending.popleft()
            start = time.perf_counter()
            try:
                buf = run_kernel(batch, *self.args, capacity=self.capacity)
            except BufferOverflowError as e:
                self.kernel_seconds += time.perf_counter() - start
                if len(batch) > 1:
                    mid = batch.start + len(batch) // 2
                    self.pending.appendleft(range(mid, batch.stop))
                    self.pending.appendleft(range(batch.start, mid))
                    self.retries += 1
                    logger.debug("Batch %s overflowed (%d > %d), splitting",
                                 batch, e.required, e.capacity)
                    continue
                logger.warning("Query %d alone yields %d pairs, above the %d-pair buffer",
                               batch.start, e.required, e.capacity)
                start = time.perf_counter()
                buf = run_kernel(batch, *self.args)
            self.kernel_seconds += time.perf_counter() - start
            return buf
        return None

    def run(self):
        try:
            while True:
                buf = self.next_buffer()
                if buf is None:
                    break
                self.out.put(buf)
        except BaseException as e:  # surfaced on the consumer side
            self.error = e
        finally:
            self.out.put(self._DONE)


def execute_pipeline(plan: BatchPlan, d: Dataset, g: GridIndex, gp: GridParams,
                     cfg: KernelConfig, depth: int = 3, overflow_factor: float = 2.0,
                     pipelined: bool = True,
                     progress: bool = False) -> Tuple[NeighborTable, PipelineStats]:
    """Run every batch of ``plan`` and assemble the neighbor table.

    A batch whose pairs exceed ``overflow_factor * plan.batch_size`` is split in two and
    retried. The table is the same whether or not batches are pipelined.

    Returns:
        ``(table, stats)``.
    """
    if not plan.ranges:
        raise ConfigError("batch plan has no query ranges")
    if sum(len(r) for r in plan.ranges) != d.count:
        raise ConfigError("batch plan does not cover the dataset")
    if depth < 1:
        raise ConfigError("pipeline depth must be >= 1")
    capacity = int(overflow_factor * plan.batch_size)
    handoff: queue.Queue = queue.Queue(maxsize=depth)
    producer = _Producer(plan.ranges, d, g, gp, cfg, capacity, handoff)

    stats = PipelineStats()
    builder = TableBuilder(d.count, plan.est_total_pairs)
    bar = tqdm(total=d.count, unit="pt", desc="join", disable=not progress, leave=False)
    start = time.perf_counter()

    def absorb(buf: PairBuffer):
        t = time.perf_counter()
        builder.add(buf)
        stats.counters = stats.counters + buf.counters
        stats.batches_run += 1
        bar.update(buf.query_ids.size)
        stats.table_seconds += time.perf_counter() - t

    if pipelined:
        producer.start()
        while True:
            item = handoff.get()
            if item is _Producer._DONE:
                break
            absorb(item)
        producer.join()
        if producer.error is not None:
            raise producer.error
    else:
        buf = producer.next_buffer()
        while buf is not None:
            absorb(buf)
            buf = producer.next_buffer()

    t = time.perf_counter()
    table = builder.finish()
    stats.table_seconds += time.perf_counter() - t
    bar.close()
    stats.kernel_seconds = producer.kernel_seconds
    stats.retries = producer.retries
    stats.total_seconds = time.perf_counter() - start
    logger.info("Joined %d points in %d batches (%d retries): |R| = %d",
                d.count, stats.batches_run, stats.retries, table.total_pairs)
    return table, stats


def selectivity(table: NeighborTable, d: Dataset) -> float:
    """Average neighbors per point, the point itself excluded."""
    if table.count != d.count:
        raise ValueError(f"table covers {table.count} points, dataset has {d.count}")
    return (table.total_pairs - d.count) / d.count
