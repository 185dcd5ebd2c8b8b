"""Choosing the number of indexed dimensions k.

Indexing more dimensions makes each query visit more cells (search cost grows with 3^k)
but compare fewer candidates. Both terms are counted in memory operations: the search
term from the index size, the comparison term from a sampled kernel run scaled by 1/f.
"""

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from joblib import Parallel, delayed

from gridjoin.data.dataset import Dataset
from gridjoin.errors import ConfigError
from gridjoin.index.grid import GridParams, build, search_cost
from gridjoin.join.batching import estimate_result_size
from gridjoin.join.kernel import KernelConfig

logger = logging.getLogger(__name__)

DEFAULT_K = 6


@dataclass(frozen=True)
class KCostProfile:
    """Memory-operation cost of indexing k dimensions."""
    k: int
    search_ops: float
    compare_ops: float
    non_empty_cells: int
    mu: int
    fraction: float

    @property
    def total_ops(self) -> float:
        return self.search_ops + self.compare_ops


def _profile_one(d: Dataset, cfg: KernelConfig, k: int, fraction: float,
                 seed: int) -> KCostProfile:
    gp = GridParams.from_dataset(d, cfg.epsilon, k)
    g = build(d, gp)
    estimate = estimate_result_size(d, g, gp, cfg, fraction=fraction, seed=seed,
                                    parallel=False)
    profile = KCostProfile(
        k=k,
        search_ops=search_cost(d.count, k, g.non_empty_count),
        compare_ops=estimate.mu / fraction,
        non_empty_cells=g.non_empty_count,
        mu=estimate.mu,
        fraction=fraction,
    )
    logger.debug("k=%d: |G|=%d search=%.3g compare=%.3g", k, profile.non_empty_cells,
                 profile.search_ops, profile.compare_ops)
    return profile


def profile_k(d: Dataset, cfg: KernelConfig, k_range: Iterable[int],
              fraction: float = 0.01, seed: int = 0,
              n_jobs: Optional[int] = None) -> List[KCostProfile]:
    """Build an index per k and measure both cost terms on the same query sample.

    Each k gets its own index; profiles run concurrently on threads.

    Raises:
        ConfigError: a k outside ``2..n``.
        IdOverflowError: the grid for some k cannot be addressed with 64-bit ids.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ConfigError("k range is empty")
    bad = [k for k in ks if not 2 <= k <= d.dims]
    if bad:
        raise ConfigError(f"k must satisfy 2 <= k <= {d.dims}, got {bad}")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("sample fraction must be in (0, 1]")
    jobs = n_jobs if n_jobs else -1
    return list(Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_profile_one)(d, cfg, k, fraction, seed) for k in ks))


def select_k(profiles: Sequence[KCostProfile]) -> int:
    """The k with the fewest total memory operations; ties go to the smaller k."""
    if not profiles:
        raise ValueError("no profiles to choose from")
    best = min(profiles, key=lambda p: (p.total_ops, p.k))
    logger.info("Selected k=%d (%.3g memory operations)", best.k, best.total_ops)
    return best.k


def write_cost_csv(profiles: Sequence[KCostProfile], path: Union[str, Path]) -> Path:
    """One row per k: k, search_ops, compare_ops, non_empty_cells, mu, fraction."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["k", "search_ops", "compare_ops", "non_empty_cells", "mu", "fraction"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for p in sorted(profiles, key=lambda p: p.k):
            writer.writerow(asdict(p))
    return path
