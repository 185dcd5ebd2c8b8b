"""Entity partitioning and the ring exchange protocol, simulated in-process.

Replicated mode gives every node the whole dataset and a round-robin share of the query
batches. Ring mode gives node k one entity stripe E_k, which is also its query set Q_k.
In round a the node joins Q_k against E_{(k - a) mod p}, then forwards that stripe to
node k + 1. After p - 1 exchanges every query has met every entry.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from gridjoin.data.dataset import Dataset
from gridjoin.distributed.base import (
    BatchWork,
    CommRecord,
    JoinParams,
    PartitionConfig,
    PartitionSimulator,
    PartitionTrace,
)
from gridjoin.errors import PartitionConfigError
from gridjoin.index.grid import GridIndex, GridParams, build
from gridjoin.join.batching import NeighborTable
from gridjoin.join.kernel import KernelConfig, run_kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpeedupRow:
    nodes: int
    makespan: float
    speedup: float


@dataclass(frozen=True)
class CommCostRow:
    nodes: int
    rounds: int
    elements: int
    seconds: float


def assign_batches(cfg: PartitionConfig) -> Dict[int, List[int]]:
    """Round robin: batch l goes to node ``l mod p``."""
    return {node: list(range(node, cfg.num_query_batches, cfg.num_nodes))
            for node in range(cfg.num_nodes)}


def entity_batches(count: int, parts: int, seed: int = 0) -> List[np.ndarray]:
    """Split a seeded shuffle of the point ids into ``parts`` sets of near-equal size.

    Ids inside each set are sorted.
    """
    if parts < 1:
        raise PartitionConfigError("parts must be >= 1")
    perm = np.random.default_rng(seed).permutation(count)
    return [np.sort(chunk) for chunk in np.array_split(perm, parts)]


def entity_stripes(count: int, nodes: int, seed: int = 0) -> List[np.ndarray]:
    """One non-empty entity stripe per node; sizes differ by at most one point."""
    if count < nodes:
        raise PartitionConfigError(f"{nodes} nodes need at least {nodes} points, got {count}")
    return entity_batches(count, nodes, seed)


def _join_batch(ids, d, g, gp, cfg, entries=None, entry_ids=None):
    return run_kernel(ids, d, g, gp, cfg, entries=entries, entry_ids=entry_ids,
                      parallel=False)


def _run_node(node: int, batch_ids: Sequence[int], batches: List[np.ndarray], d: Dataset,
              g: GridIndex, gp: GridParams, cfg: KernelConfig):
    results = []
    for b in batch_ids:
        buf = _join_batch(batches[b], d, g, gp, cfg)
        work = BatchWork(node=node, batch=b, queries=int(batches[b].size),
                         distance_tests=buf.counters.distance_tests, pairs=buf.count)
        results.append((work, buf.pairs))
    return results


def run_replicated(d: Dataset, cfg: PartitionConfig, params: JoinParams, seed: int = 0,
                   n_jobs: Optional[int] = None) -> Tuple[PartitionTrace, NeighborTable]:
    """Every node holds all of ``d`` and joins its query batches against it.

    The union table equals the single-node table, including neighbor order.
    """
    if cfg.mode != "replicated":
        raise PartitionConfigError(f"run_replicated needs replicated mode, got {cfg.mode}")
    gp = GridParams.from_dataset(d, params.epsilon, params.k)
    g = build(d, gp)
    kcfg = params.kernel_config()
    batches = entity_batches(d.count, cfg.num_query_batches, seed)
    assignment = assign_batches(cfg)

    per_node = Parallel(n_jobs=n_jobs or -1, prefer="threads")(
        delayed(_run_node)(node, assignment[node], batches, d, g, gp, kcfg)
        for node in range(cfg.num_nodes))

    trace = PartitionTrace(mode="replicated", num_nodes=cfg.num_nodes)
    chunks = []
    for results in per_node:
        for work, pairs in results:
            trace.batch_work.append(work)
            chunks.append(pairs)
    trace.batch_work.sort(key=lambda w: w.batch)
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    table = NeighborTable.from_pairs(d.count, pairs, sort_neighbors=False)
    logger.info("Replicated run on %d nodes, %d batches: |R| = %d",
                cfg.num_nodes, cfg.num_query_batches, table.total_pairs)
    return trace, table


def run_ring(d: Dataset, cfg: PartitionConfig, params: JoinParams, seed: int = 0,
             n_jobs: Optional[int] = None, alpha: float = 5e-5, beta: float = 5e9,
             element_bytes: int = 4) -> Tuple[PartitionTrace, NeighborTable]:
    """Simulate the ring exchange; rounds are separated by a barrier.

    Round times follow ``alpha + bytes / beta`` with bytes taken from the largest send
    of the round. The union table lists each query's neighbors in ascending id order.
    """
    if cfg.mode != "ring":
        raise PartitionConfigError(f"run_ring needs ring mode, got {cfg.mode}")
    if beta <= 0:
        raise PartitionConfigError("bandwidth must be positive")
    p = cfg.num_nodes
    gp = GridParams.from_dataset(d, params.epsilon, params.k)
    kcfg = params.kernel_config()
    stripes = entity_stripes(d.count, p, seed)
    entries = [d.subset(s, name=f"{d.name}-E{i}") for i, s in enumerate(stripes)]
    indexes = [build(e, gp) for e in entries]

    trace = PartitionTrace(mode="ring", num_nodes=p)
    chunks = []
    for a in range(p):
        if a > 0:
            largest = 0
            for node in range(p):
                held = (node - a) % p
                trace.comm.append(CommRecord(round=a, src=(node - 1) % p, dst=node,
                                             elements=int(stripes[held].size)))
                largest = max(largest, int(stripes[held].size))
            trace.round_times.append(alpha + largest * d.dims * element_bytes / beta)
        buffers = Parallel(n_jobs=n_jobs or -1, prefer="threads")(
            delayed(_join_batch)(stripes[node], d, indexes[(node - a) % p], gp, kcfg,
                                 entries[(node - a) % p], stripes[(node - a) % p])
            for node in range(p))
        for node, buf in enumerate(buffers):
            trace.batch_work.append(BatchWork(
                node=node, batch=a, queries=int(stripes[node].size),
                distance_tests=buf.counters.distance_tests, pairs=buf.count))
            chunks.append(buf.pairs)

    pairs = np.concatenate(chunks)
    table = NeighborTable.from_pairs(d.count, pairs, sort_neighbors=True)
    logger.info("Ring run on %d nodes: %d elements exchanged, |R| = %d",
                p, trace.total_comm, table.total_pairs)
    return trace, table


class ReplicatedSimulator(PartitionSimulator):
    mode = "replicated"

    def run(self, d: Dataset) -> Tuple[PartitionTrace, NeighborTable]:
        return run_replicated(d, self.config, self.params, seed=self.seed,
                              n_jobs=self.n_jobs)


class RingSimulator(PartitionSimulator):
    mode = "ring"

    def __init__(self, config: PartitionConfig, params: JoinParams, seed: int = 0,
                 n_jobs: Optional[int] = None, alpha: float = 5e-5, beta: float = 5e9,
                 element_bytes: int = 4):
        super().__init__(config, params, seed=seed, n_jobs=n_jobs)
        self.alpha = alpha
        self.beta = beta
        self.element_bytes = element_bytes

    def run(self, d: Dataset) -> Tuple[PartitionTrace, NeighborTable]:
        return run_ring(d, self.config, self.params, seed=self.seed, n_jobs=self.n_jobs,
                        alpha=self.alpha, beta=self.beta, element_bytes=self.element_bytes)


def project_speedup(work: Union[PartitionTrace, Sequence[float]],
                    node_counts: Sequence[int]) -> List[SpeedupRow]:
    """Makespan and speedup if the measured batches were spread round robin over p nodes.

    Args:
        work: Per-batch work (distance tests), or a trace to take it from.
        node_counts: Node counts to project.
    """
    weights = work.batch_weights() if isinstance(work, PartitionTrace) else work
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        raise ValueError("no batch work to project")
    serial = float(weights.sum())
    rows = []
    for p in node_counts:
        if p < 1:
            raise PartitionConfigError("node counts must be >= 1")
        loads = [weights[node::p].sum() for node in range(min(p, weights.size))]
        makespan = float(max(loads))
        rows.append(SpeedupRow(nodes=int(p), makespan=makespan,
                               speedup=serial / makespan if makespan > 0 else float(p)))
    return rows


def work_histogram(weights: Sequence[float], bins: int = 10) -> Tuple[np.ndarray, np.ndarray]:
    """Histogram of per-batch work: ``(counts, bin edges)``."""
    return np.histogram(np.asarray(weights, dtype=np.float64), bins=bins)


def communication_curve(count: int, dims: int, node_counts: Sequence[int],
                        alpha: float = 5e-5, beta: float = 5e9,
                        element_bytes: int = 4) -> List[CommCostRow]:
    """Modeled ring communication for each node count.

    Stripes are ``ceil(|D|/p)`` points, so every round costs
    ``alpha + ceil(|D|/p) * dims * element_bytes / beta``.
    """
    rows = []
    for p in node_counts:
        if p < 1:
            raise PartitionConfigError("node counts must be >= 1")
        rounds = p - 1
        per_round = alpha + math.ceil(count / p) * dims * element_bytes / beta
        rows.append(CommCostRow(nodes=int(p), rounds=rounds, elements=rounds * count,
                                seconds=rounds * per_round))
    return rows


def _write_rows(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_trace(trace: PartitionTrace, directory: Union[str, Path],
                speedups: Optional[Sequence[SpeedupRow]] = None) -> List[Path]:
    """Write ``comm.csv``, ``work.csv`` and, when given, ``speedup.csv`` into ``directory``."""
    directory = Path(directory)
    written = [
        _write_rows(directory / "comm.csv", ("round", "src", "dst", "elements"),
                    [(r.round, r.src, r.dst, r.elements) for r in trace.comm]),
        _write_rows(directory / "work.csv",
                    ("node", "batch", "queries", "distance_tests", "pairs"),
                    [(w.node, w.batch, w.queries, w.distance_tests, w.pairs)
                     for w in trace.batch_work]),
    ]
    if speedups:
        written.append(_write_rows(directory / "speedup.csv",
                                   ("nodes", "makespan", "speedup"),
                                   [(s.nodes, s.makespan, s.speedup) for s in speedups]))
    return written
