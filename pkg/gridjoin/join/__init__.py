"""Self-join kernel, batch engine and brute-force oracle."""

from gridjoin.join.batching import (
    BatchPlan,
    NeighborTable,
    PipelineStats,
    ResultEstimate,
    estimate_result_size,
    execute_pipeline,
    plan_batches,
    selectivity,
)
from gridjoin.join.kernel import (
    KernelConfig,
    PairBuffer,
    WorkCounters,
    count_neighbors,
    dist_within,
    query_point,
    run_kernel,
    set_threads,
)
from gridjoin.join.oracle import OraclePairs, brute_join

__all__ = [
    "BatchPlan",
    "KernelConfig",
    "NeighborTable",
    "OraclePairs",
    "PairBuffer",
    "PipelineStats",
    "ResultEstimate",
    "WorkCounters",
    "brute_join",
    "count_neighbors",
    "dist_within",
    "estimate_result_size",
    "execute_pipeline",
    "plan_batches",
    "query_point",
    "run_kernel",
    "selectivity",
    "set_threads",
]
