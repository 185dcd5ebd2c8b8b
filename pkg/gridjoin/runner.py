"""End-to-end join run: dataset in, neighbor table and report out."""

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, MutableMapping, Optional

import numpy as np
from rich.console import Console
from rich.table import Table

from gridjoin.core.graph import Graph
from gridjoin.data.dataset import (
    PRESETS,
    Dataset,
    estimate_variance,
    generate_exponential,
    generate_preset,
    generate_uniform,
    load_dataset,
    normalize,
    reorder_by_variance,
)
from gridjoin.distributed.base import JoinParams, PartitionSimulator
from gridjoin.distributed.partition import project_speedup, write_trace
from gridjoin.errors import ConfigError, GridJoinError
from gridjoin.index.grid import GridParams, build
from gridjoin.join.batching import (
    PAIR_FORMATS,
    estimate_result_size,
    execute_pipeline,
    plan_batches,
    selectivity,
)
from gridjoin.join.kernel import KernelConfig, set_threads
from gridjoin.join.oracle import brute_join
from gridjoin.settings import BatchSettings, JoinSettings, SimulationSettings
from gridjoin.tuning import profile_k, select_k, write_cost_csv

logger = logging.getLogger(__name__)

GENERATORS = ("exp", "uniform") + tuple(
    name for name, p in PRESETS.items() if p.kind == "exponential")
REPORT_FORMATS = ("text", "json", "csv")
TIMED_STAGES = ("reorder", "index", "tune", "estimate", "join")


@dataclass(frozen=True)
class RunArgs:
    """Everything a run needs; built from the config file plus command line overrides."""
    input: Optional[str] = None
    fmt: str = "csv"
    dims: Optional[int] = None
    gen: Optional[str] = None
    count: int = 20_000
    lam: float = 40.0
    epsilon: float = 0.05
    k: int = 6
    tune_k: bool = False
    k_min: int = 2
    k_max: int = 8
    tune_fraction: float = 0.01
    reorder: bool = False
    sortidu: bool = False
    shortc: bool = False
    batch_size: int = 100_000_000
    min_batches: int = 3
    sample_fraction: float = 0.01
    variance_fraction: float = 0.01
    pipeline_depth: int = 3
    overflow_factor: float = 2.0
    seed: int = 0
    threads: int = 0
    oracle: bool = False
    simulate: Optional[str] = None
    nodes: int = 4
    batches: int = 32
    alpha: float = 5e-5
    beta: float = 5e9
    element_bytes: int = 4
    out_pairs: Optional[str] = None
    pairs_format: str = "text"
    out_trace: Optional[str] = None
    out_costs: Optional[str] = None
    progress: bool = False

    @staticmethod
    def from_config(config: Dict[str, Any], **overrides) -> "RunArgs":
        """Defaults from ``config``; every override that is not None wins."""
        join = JoinSettings.from_config(config)
        batching = BatchSettings.from_config(config)
        sim = SimulationSettings.from_config(config)
        dataset = config.get("dataset", {})
        tuning = config.get("tuning", {})
        runtime = config.get("runtime", {})
        args = RunArgs(
            epsilon=join.epsilon, k=join.k, reorder=join.reorder, sortidu=join.sortidu,
            shortc=join.shortc,
            batch_size=batching.batch_size, min_batches=batching.min_batches,
            sample_fraction=batching.sample_fraction,
            pipeline_depth=batching.pipeline_depth,
            overflow_factor=batching.overflow_factor,
            variance_fraction=float(dataset.get("variance_fraction", 0.01)),
            lam=float(dataset.get("lambda", 40.0)),
            seed=int(dataset.get("seed", 0)),
            k_min=int(tuning.get("k_min", 2)), k_max=int(tuning.get("k_max", 8)),
            tune_fraction=float(tuning.get("sample_fraction", 0.01)),
            nodes=sim.nodes, batches=sim.batches, alpha=sim.alpha, beta=sim.beta,
            element_bytes=sim.element_bytes,
            threads=int(runtime.get("threads", 0)),
            progress=bool(runtime.get("progress", False)),
        )
        known = {f.name for f in fields(RunArgs)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown run options: {sorted(unknown)}")
        return replace(args, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self):
        if (self.input is None) == (self.gen is None):
            raise ConfigError("give exactly one of --input or --gen")
        if self.input is not None and self.dims is None:
            raise ConfigError("--input needs the dimensionality (--n)")
        if self.gen is not None and self.gen not in GENERATORS:
            raise ConfigError(f"unknown generator {self.gen!r}, expected one of {GENERATORS}")
        if self.gen in ("exp", "uniform") and self.dims is None:
            raise ConfigError(f"--gen {self.gen} needs the dimensionality (--n)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.pairs_format not in PAIR_FORMATS:
            raise ConfigError(f"unknown pair format {self.pairs_format!r}")
        if self.simulate is not None and self.simulate not in ("replicated", "ring"):
            raise ConfigError(f"unknown simulation mode {self.simulate!r}")

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(self.epsilon, sortidu=self.sortidu, shortc=self.shortc)


@dataclass
class RunReport:
    """Outcome of one run."""
    dataset: str
    count: int
    dims: int
    epsilon: float
    k: int
    flags: Dict[str, bool]
    total_pairs: int
    selectivity: float
    est_total_pairs: int
    num_batches: int
    retries: int
    counters: Dict[str, int]
    perm: List[int]
    timings: Dict[str, float] = field(default_factory=dict)
    overhead_fraction: float = 0.0
    oracle: Optional[str] = None
    simulation: Optional[Dict[str, Any]] = None

    def check(self):
        """Recompute S_D from |R| and |D| and compare with the stored value."""
        expected = (self.total_pairs - self.count) / self.count
        if expected != self.selectivity:
            raise GridJoinError(
                f"selectivity {self.selectivity} disagrees with (|R|-|D|)/|D| = {expected}")

    def to_dict(self, include_timings: bool = True) -> Dict[str, Any]:
        self.check()
        data = asdict(self)
        if not include_timings:
            data.pop("timings")
            data.pop("overhead_fraction")
        return data

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), sort_keys=True)

    def to_csv(self, include_timings: bool = True) -> str:
        flat: Dict[str, Any] = {}
        for key, value in self.to_dict(include_timings).items():
            if isinstance(value, dict):
                for sub, v in sorted(value.items()):
                    flat[f"{key}.{sub}"] = v
            elif isinstance(value, list):
                flat[key] = " ".join(map(str, value))
            else:
                flat[key] = "" if value is None else value
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
        writer.writeheader()
        writer.writerow(flat)
        return buf.getvalue()

    def render(self, console: Console):
        """Print the report as a table."""
        self.check()
        table = Table(title=f"Self-join of {self.dataset}", show_header=False)
        table.add_column("field", style="cyan")
        table.add_column("value")
        on = [name for name, enabled in self.flags.items() if enabled]
        rows = [
            ("|D|", str(self.count)),
            ("n", str(self.dims)),
            ("epsilon", f"{self.epsilon:g}"),
            ("k", str(self.k)),
            ("optimizations", ", ".join(on) or "none"),
            ("|R|", str(self.total_pairs)),
            ("S_D", f"{self.selectivity:.4f}"),
            ("estimated |R|", str(self.est_total_pairs)),
            ("batches", f"{self.num_batches} ({self.retries} retries)"),
        ]
        rows += [(name.replace("_", " "), str(v)) for name, v in self.counters.items()]
        rows += [(f"{stage} time", f"{secs:.3f}s") for stage, secs in self.timings.items()]
        rows.append(("host overhead", f"{100 * self.overhead_fraction:.1f}%"))
        if self.oracle is not None:
            color = "green" if self.oracle == "PASS" else "red"
            rows.append(("oracle", f"[{color}]{self.oracle}[/]"))
        if self.simulation:
            rows += [(f"sim {k}", str(v)) for k, v in self.simulation.items()]
        for row in rows:
            table.add_row(*row)
        console.print(table)


def load_input(args: RunArgs) -> Dataset:
    """Read or generate the raw dataset named by ``args``."""
    if args.input is not None:
        return load_dataset(args.input, args.fmt, args.dims)
    if args.gen == "exp":
        return generate_exponential(args.count, args.dims, lam=args.lam, seed=args.seed)
    if args.gen == "uniform":
        return generate_uniform(args.count, args.dims, seed=args.seed)
    preset = PRESETS[args.gen]
    if args.dims is not None and args.dims != preset.dims:
        raise ConfigError(f"{args.gen} has {preset.dims} dimensions, --n asks for {args.dims}")
    return generate_preset(args.gen, count=args.count, seed=args.seed, lam=args.lam)


def _load(ctx: MutableMapping[str, Any]):
    ctx["dataset"] = load_input(ctx["args"])


def _normalize(ctx: MutableMapping[str, Any]):
    ctx["dataset"] = normalize(ctx["dataset"])


def _reorder(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    if not args.reorder:
        return
    stats = estimate_variance(ctx["dataset"], fraction=args.variance_fraction, seed=args.seed)
    ctx["dataset"] = reorder_by_variance(ctx["dataset"], stats)


def _index(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    if args.tune_k:
        return
    ctx["k"] = args.k
    ctx["gp"] = GridParams.from_dataset(ctx["dataset"], args.epsilon, args.k)
    ctx["index"] = build(ctx["dataset"], ctx["gp"])


def _tune(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    if not args.tune_k:
        return
    d: Dataset = ctx["dataset"]
    k_max = min(args.k_max, d.dims)
    if args.k_min > k_max:
        raise ConfigError(f"no k in [{args.k_min}, {args.k_max}] fits {d.dims} dimensions")
    profiles = profile_k(d, args.kernel_config(), range(args.k_min, k_max + 1),
                         fraction=args.tune_fraction, seed=args.seed,
                         n_jobs=args.threads or None)
    if args.out_costs:
        write_cost_csv(profiles, args.out_costs)
    ctx["profiles"] = profiles
    ctx["k"] = select_k(profiles)
    ctx["gp"] = GridParams.from_dataset(d, args.epsilon, ctx["k"])
    ctx["index"] = build(d, ctx["gp"])


def _estimate(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    d: Dataset = ctx["dataset"]
    estimate = estimate_result_size(d, ctx["index"], ctx["gp"], args.kernel_config(),
                                    fraction=args.sample_fraction, seed=args.seed)
    ctx["estimate"] = estimate
    ctx["plan"] = plan_batches(estimate.total_pairs, args.batch_size,
                               min_batches=args.min_batches, count=d.count)


def _join(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    table, stats = execute_pipeline(ctx["plan"], ctx["dataset"], ctx["index"], ctx["gp"],
                                    args.kernel_config(), depth=args.pipeline_depth,
                                    overflow_factor=args.overflow_factor,
                                    progress=args.progress)
    ctx["table"] = table
    ctx["stats"] = stats
    if args.out_pairs:
        table.write(args.out_pairs, args.pairs_format)
        logger.info("Wrote %d pairs to %s", table.total_pairs, args.out_pairs)


def _verify(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    if not args.oracle:
        return
    truth = brute_join(ctx["dataset"], args.epsilon)
    ctx["oracle"] = "PASS" if truth.matches(ctx["table"]) else "FAIL"
    if ctx["oracle"] == "FAIL":
        logger.error("Oracle mismatch: %d pairs expected, %d produced",
                     truth.total_pairs, ctx["table"].total_pairs)


def _simulate(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    if args.simulate is None:
        return
    settings = SimulationSettings(mode=args.simulate, nodes=args.nodes, batches=args.batches,
                                  alpha=args.alpha, beta=args.beta,
                                  element_bytes=args.element_bytes)
    params = JoinParams(args.epsilon, ctx["k"], sortidu=args.sortidu, shortc=args.shortc)
    simulator = PartitionSimulator.from_config(settings, params, seed=args.seed,
                                               n_jobs=args.threads or None)
    trace, table = simulator.run(ctx["dataset"])
    work = trace.node_work()
    tests = [t for t, _ in work.values()]
    summary: Dict[str, Any] = {
        "mode": args.simulate,
        "nodes": args.nodes,
        "total_comm": trace.total_comm,
        "comm_seconds": trace.comm_seconds,
        "node_work_ratio": max(tests) / max(min(tests), 1),
        "matches_join": bool(np.array_equal(table.sorted_pairs(), ctx["table"].sorted_pairs())),
    }
    speedups = None
    if args.simulate == "replicated":
        counts = [p for p in (1, 2, 4, 8, 16, 32, 64, 128) if args.batches % p == 0]
        speedups = project_speedup(trace, counts)
        summary["speedup"] = {str(s.nodes): round(s.speedup, 4) for s in speedups}
    if args.out_trace:
        write_trace(trace, args.out_trace, speedups)
    ctx["trace"] = trace
    ctx["simulation"] = summary


def _report(ctx: MutableMapping[str, Any]):
    args: RunArgs = ctx["args"]
    d: Dataset = ctx["dataset"]
    stats = ctx["stats"]
    timings = {stage: secs for stage, secs in ctx["timings"].items() if stage in TIMED_STAGES}
    timings["kernel"] = stats.kernel_seconds
    timings["table"] = stats.table_seconds
    ctx["report"] = RunReport(
        dataset=d.name,
        count=d.count,
        dims=d.dims,
        epsilon=args.epsilon,
        k=ctx["k"],
        flags={"reorder": args.reorder, "sortidu": args.sortidu, "shortc": args.shortc},
        total_pairs=ctx["table"].total_pairs,
        selectivity=selectivity(ctx["table"], d),
        est_total_pairs=ctx["estimate"].total_pairs,
        num_batches=ctx["plan"].num_batches,
        retries=stats.retries,
        counters=stats.counters.as_dict(),
        perm=d.perm.tolist(),
        timings=timings,
        overhead_fraction=stats.overhead_fraction,
        oracle=ctx.get("oracle"),
        simulation=ctx.get("simulation"),
    )


def build_graph() -> Graph:
    graph = Graph()
    for name, handler in (("load", _load), ("normalize", _normalize), ("reorder", _reorder),
                          ("index", _index), ("tune", _tune), ("estimate", _estimate),
                          ("join", _join), ("verify", _verify), ("simulate", _simulate),
                          ("report", _report)):
        graph.set_handler(name, handler)
    return graph


def run(args: RunArgs) -> RunReport:
    """Run the whole pipeline and return its report.

    Raises:
        GridJoinError: invalid arguments, unreadable input or an unaddressable grid.
    """
    args.validate()
    threads = set_threads(args.threads)
    logger.debug("Kernel threads: %d", threads)
    ctx: Dict[str, Any] = {"args": args}
    build_graph().walk(ctx)
    return ctx["report"]
