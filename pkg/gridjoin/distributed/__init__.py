"""In-process simulation of entity-partitioned multi-node self-joins."""

from gridjoin.distributed.base import (
    BatchWork,
    CommRecord,
    JoinParams,
    PartitionConfig,
    PartitionSimulator,
    PartitionTrace,
)
from gridjoin.distributed.partition import (
    ReplicatedSimulator,
    RingSimulator,
    assign_batches,
    communication_curve,
    entity_batches,
    entity_stripes,
    project_speedup,
    run_replicated,
    run_ring,
    work_histogram,
    write_trace,
)

__all__ = [
    "BatchWork",
    "CommRecord",
    "JoinParams",
    "PartitionConfig",
    "PartitionSimulator",
    "PartitionTrace",
    "ReplicatedSimulator",
    "RingSimulator",
    "assign_batches",
    "communication_curve",
    "entity_batches",
    "entity_stripes",
    "project_speedup",
    "run_replicated",
    "run_ring",
    "work_histogram",
    "write_trace",
]
