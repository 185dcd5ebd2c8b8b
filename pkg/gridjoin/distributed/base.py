"""Shared types of the partitioning simulators."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from gridjoin.data.dataset import Dataset
from gridjoin.errors import PartitionConfigError
from gridjoin.join.batching import NeighborTable
from gridjoin.join.kernel import KernelConfig
from gridjoin.settings import SimulationSettings

MODES = ("replicated", "ring")


@dataclass(frozen=True)
class PartitionConfig:
    """Node count, query-batch count and data placement."""
    num_nodes: int
    num_query_batches: int
    mode: str = "replicated"

    def __post_init__(self):
        if self.num_nodes < 1:
            raise PartitionConfigError("at least one node is required")
        if self.num_query_batches < 1:
            raise PartitionConfigError("at least one query batch is required")
        if self.num_query_batches % self.num_nodes:
            raise PartitionConfigError(
                f"{self.num_query_batches} query batches cannot be split evenly over "
                f"{self.num_nodes} nodes")
        if self.mode not in MODES:
            raise PartitionConfigError(f"Unknown partitioning mode: {self.mode}")

    @property
    def batches_per_node(self) -> int:
        return self.num_query_batches // self.num_nodes


@dataclass(frozen=True)
class JoinParams:
    """What every simulated node joins with."""
    epsilon: float
    k: int
    sortidu: bool = False
    shortc: bool = False

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(self.epsilon, sortidu=self.sortidu, shortc=self.shortc)


@dataclass(frozen=True)
class BatchWork:
    """Work one node did for one query batch (replicated) or one round (ring)."""
    node: int
    batch: int
    queries: int
    distance_tests: int
    pairs: int


@dataclass(frozen=True)
class CommRecord:
    """Points shipped from ``src`` to ``dst`` before ``round`` is computed."""
    round: int
    src: int
    dst: int
    elements: int


@dataclass
class PartitionTrace:
    """Work and communication ledger of one simulated run."""
    mode: str
    num_nodes: int
    batch_work: List[BatchWork] = field(default_factory=list)
    comm: List[CommRecord] = field(default_factory=list)
    round_times: List[float] = field(default_factory=list)

    @property
    def total_comm(self) -> int:
        return sum(r.elements for r in self.comm)

    @property
    def comm_seconds(self) -> float:
        return float(sum(self.round_times))

    def node_work(self) -> Dict[int, Tuple[int, int]]:
        """``node -> (distance tests, pairs)``."""
        work = {node: (0, 0) for node in range(self.num_nodes)}
        for w in self.batch_work:
            tests, pairs = work[w.node]
            work[w.node] = (tests + w.distance_tests, pairs + w.pairs)
        return work

    def batch_weights(self) -> np.ndarray:
        """Distance tests per batch, indexed by batch id."""
        weights = np.zeros(max((w.batch for w in self.batch_work), default=-1) + 1,
                           dtype=np.int64)
        for w in self.batch_work:
            weights[w.batch] += w.distance_tests
        return weights

    def sent_by(self, node: int) -> int:
        return sum(r.elements for r in self.comm if r.src == node)

    def received_by(self, node: int) -> int:
        return sum(r.elements for r in self.comm if r.dst == node)

    def round_sends(self, round_: int) -> int:
        return sum(r.elements for r in self.comm if r.round == round_)


class PartitionSimulator(ABC):
    """Runs a self-join as if spread over several nodes."""

    mode: str = ""

    def __init__(self, config: PartitionConfig, params: JoinParams, seed: int = 0,
                 n_jobs: Optional[int] = None):
        """Initialize the simulator.

        Args:
            config: Node and batch counts.
            params: Join radius, k and kernel filters.
            seed: Seed of the shuffle that forms query batches or entity stripes.
            n_jobs: Threads used to run nodes concurrently; all cores when None.
        """
        if config.mode != self.mode:
            raise PartitionConfigError(
                f"{type(self).__name__} runs {self.mode!r} mode, config asks for "
                f"{config.mode!r}")
        self.config = config
        self.params = params
        self.seed = seed
        self.n_jobs = n_jobs

    @abstractmethod
    def run(self, d: Dataset) -> Tuple[PartitionTrace, NeighborTable]:
        """Join ``d`` on every simulated node.

        Returns:
            The run's trace and the union of every node's result as one table.
        """

    @staticmethod
    def from_config(settings: SimulationSettings, params: JoinParams, seed: int = 0,
                    n_jobs: Optional[int] = None) -> "PartitionSimulator":
        """Create the simulator named by ``settings.mode``."""
        config = PartitionConfig(num_nodes=settings.nodes,
                                 num_query_batches=settings.batches, mode=settings.mode)
        if settings.mode == "replicated":
            from gridjoin.distributed.partition import ReplicatedSimulator
            return ReplicatedSimulator(config, params, seed=seed, n_jobs=n_jobs)
        elif settings.mode == "ring":
            from gridjoin.distributed.partition import RingSimulator
            return RingSimulator(config, params, seed=seed, n_jobs=n_jobs,
                                 alpha=settings.alpha, beta=settings.beta,
                                 element_bytes=settings.element_bytes)
        else:
            raise PartitionConfigError(f"Unknown partitioning mode: {settings.mode}")
