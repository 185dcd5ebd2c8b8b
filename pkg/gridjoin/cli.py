import logging
import sys

import click
from rich.console import Console
from rich.table import Table

from gridjoin.data.dataset import PRESETS, export_dataset, normalize
from gridjoin.errors import GridJoinError
from gridjoin.index.grid import search_loss
from gridjoin.logging_utils import setup_logger
from gridjoin.runner import GENERATORS, REPORT_FORMATS, RunArgs, load_input, run
from gridjoin.settings import load_config
from gridjoin.tuning import profile_k, select_k, write_cost_csv

console = Console()
logger = logging.getLogger(__name__)
err_console = Console(stderr=True)


def _fail(e: Exception):
    err_console.print(f"[red]Error: {e}[/]")
    sys.exit(2)


def _crash(e: Exception):
    logger.error(f"Unexpected error: {e}", exc_info=True)
    sys.exit(1)


@click.group()
@click.option('--config', '-c', type=click.Path(exists=False),
              help='Path to configuration file')
@click.option('--verbose', '-v', is_flag=True, help='Debug logging')
@click.pass_context
def cli(ctx, config, verbose):
    """Grid-indexed epsilon self-join for high-dimensional points.

    Defaults come from config/config.yaml (or the packaged copy); command line
    options override them.
    """
    try:
        ctx.obj = load_config(config)
    except GridJoinError as e:
        _fail(e)
    logging_cfg = ctx.obj.get('logging', {})
    setup_logger(verbose=verbose, level=logging_cfg.get('level'),
                 fmt=logging_cfg.get('format', '%(message)s'))


def _dataset_options(fn):
    options = [
        click.option('--input', '-i', 'input_path', type=click.Path(exists=True),
                     help='Dataset file (one point per row)'),
        click.option('--format', 'fmt', type=click.Choice(['csv', 'f32']), default='csv',
                     show_default=True, help='Input file format'),
        click.option('--n', 'dims', type=int, help='Number of dimensions'),
        click.option('--gen', type=click.Choice(list(GENERATORS)),
                     help='Generate a synthetic dataset instead of reading one'),
        click.option('--count', type=int, help='Points to generate'),
        click.option('--lambda', 'lam', type=float, help='Exponential rate'),
        click.option('--seed', type=int, help='Seed for generation and sampling'),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@cli.command('run')
@_dataset_options
@click.option('--eps', type=float, help='Search radius')
@click.option('--k', type=int, help='Number of indexed dimensions')
@click.option('--tune-k', is_flag=True, help='Choose k with the cost model')
@click.option('--reorder/--no-reorder', default=None, help='Reorder dims by variance')
@click.option('--sortidu/--no-sortidu', default=None, help='Bound cell scans on an un-indexed dim')
@click.option('--shortc/--no-shortc', default=None, help='Short-circuit distance sums')
@click.option('--batch-size', type=int, help='Expected pairs per batch')
@click.option('--sample-frac', type=float, help='Query fraction sampled for the |R| estimate')
@click.option('--threads', type=int, help='Worker threads (0 = all cores)')
@click.option('--oracle', is_flag=True, help='Check against a brute-force join')
@click.option('--simulate', type=click.Choice(['replicated', 'ring']),
              help='Also simulate a multi-node run')
@click.option('--nodes', type=int, help='Simulated nodes')
@click.option('--batches', type=int, help='Query batches for the simulation')
@click.option('--out-pairs', type=click.Path(), help='Write the neighbor table here')
@click.option('--pairs-format', type=click.Choice(['text', 'binary']),
              help='Neighbor table format')
@click.option('--out-trace', type=click.Path(), help='Directory for simulation CSVs')
@click.option('--out-costs', type=click.Path(), help='k cost table CSV (with --tune-k)')
@click.option('--report-format', type=click.Choice(list(REPORT_FORMATS)), default='text',
              show_default=True)
@click.option('--no-timings', is_flag=True, help='Leave wall times out of json/csv reports')
@click.option('--progress/--no-progress', default=None, help='Show a progress bar')
@click.pass_context
def run_command(ctx, input_path, fmt, dims, gen, count, lam, seed, eps, k, tune_k, reorder,
                sortidu, shortc, batch_size, sample_frac, threads, oracle, simulate, nodes,
                batches, out_pairs, pairs_format, out_trace, out_costs, report_format,
                no_timings, progress):
    """Self-join a dataset and report |R|, selectivity, timings and work."""
    try:
        args = RunArgs.from_config(
            ctx.obj, input=input_path, fmt=fmt, dims=dims, gen=gen, count=count, lam=lam,
            seed=seed, epsilon=eps, k=k, tune_k=tune_k or None, reorder=reorder,
            sortidu=sortidu, shortc=shortc, batch_size=batch_size,
            sample_fraction=sample_frac, threads=threads, oracle=oracle or None,
            simulate=simulate, nodes=nodes, batches=batches,
            out_pairs=out_pairs, pairs_format=pairs_format, out_trace=out_trace,
            out_costs=out_costs, progress=progress)
        report = run(args)
    except (GridJoinError, FileNotFoundError) as e:
        _fail(e)
    except Exception as e:
        _crash(e)

    if report_format == 'json':
        click.echo(report.to_json(include_timings=not no_timings))
    elif report_format == 'csv':
        click.echo(report.to_csv(include_timings=not no_timings), nl=False)
    else:
        report.render(console)

    if report.oracle == 'FAIL':
        err_console.print("[bold red]✗[/] Result differs from the brute-force join")
        sys.exit(1)
    if report.simulation and not report.simulation.get('matches_join', True):
        err_console.print("[bold red]✗[/] Simulated result differs from the join")
        sys.exit(1)


@cli.command()
@_dataset_options
@click.option('--output', '-o', type=click.Path(), required=True, help='Output file')
@click.option('--out-format', type=click.Choice(['csv', 'f32']), default='csv',
              show_default=True)
@click.option('--normalize', 'do_normalize', is_flag=True, help='Write normalized values')
@click.pass_context
def generate(ctx, input_path, fmt, dims, gen, count, lam, seed, output, out_format,
             do_normalize):
    """Write a synthetic (or converted) dataset."""
    try:
        args = RunArgs.from_config(ctx.obj, input=input_path, fmt=fmt, dims=dims, gen=gen,
                                   count=count, lam=lam, seed=seed)
        args.validate()
        d = load_input(args)
        if do_normalize:
            d = normalize(d)
        path = export_dataset(d, output, out_format)
    except (GridJoinError, FileNotFoundError, ValueError) as e:
        _fail(e)
    except Exception as e:
        _crash(e)
    console.print(f"[bold green]✓[/] Wrote {d.count} points in {d.dims} dimensions to {path}")


@cli.command()
@_dataset_options
@click.option('--eps', type=float, help='Search radius')
@click.option('--k-min', type=int, help='Smallest k to profile')
@click.option('--k-max', type=int, help='Largest k to profile')
@click.option('--sample-frac', type=float, help='Query fraction sampled per k')
@click.option('--sortidu/--no-sortidu', default=None)
@click.option('--shortc/--no-shortc', default=None)
@click.option('--out-costs', type=click.Path(), help='Write the cost table as CSV')
@click.pass_context
def tune(ctx, input_path, fmt, dims, gen, count, lam, seed, eps, k_min, k_max, sample_frac,
         sortidu, shortc, out_costs):
    """Profile search and comparison cost for each k and pick the cheapest."""
    try:
        args = RunArgs.from_config(ctx.obj, input=input_path, fmt=fmt, dims=dims, gen=gen,
                                   count=count, lam=lam, seed=seed, epsilon=eps,
                                   k_min=k_min, k_max=k_max, tune_fraction=sample_frac,
                                   sortidu=sortidu, shortc=shortc)
        args.validate()
        d = normalize(load_input(args))
        upper = min(args.k_max, d.dims)
        profiles = profile_k(d, args.kernel_config(), range(args.k_min, upper + 1),
                             fraction=args.tune_fraction, seed=args.seed)
        best = select_k(profiles)
        if out_costs:
            write_cost_csv(profiles, out_costs)
    except (GridJoinError, FileNotFoundError) as e:
        _fail(e)
    except Exception as e:
        _crash(e)

    table = Table(title=f"Memory operations per k ({d.name}, eps={args.epsilon:g})")
    for column in ('k', '|G|', 'search', 'compare', 'total'):
        table.add_column(column, justify='right')
    for p in profiles:
        style = 'bold green' if p.k == best else None
        table.add_row(str(p.k), str(p.non_empty_cells), f"{p.search_ops:.4g}",
                      f"{p.compare_ops:.4g}", f"{p.total_ops:.4g}", style=style)
    console.print(table)
    console.print(f"Selected k = [bold]{best}[/]")


@cli.command()
@click.option('--n', 'dims', type=int, required=True, help='Number of dimensions')
def loss(dims):
    """Share of adjacent cells skipped when only k of n dimensions are indexed."""
    if dims < 2:
        _fail(ValueError('--n must be >= 2'))
    table = Table(title=f"Search loss for n={dims}")
    table.add_column('k', justify='right')
    table.add_column('loss', justify='right')
    for k in range(2, dims + 1):
        table.add_row(str(k), f"{100 * search_loss(dims, k):.1f}%")
    console.print(table)


@cli.command()
def presets():
    """List the known dataset shapes."""
    table = Table(title="Dataset presets")
    for column in ('name', '|D|', 'n', 'kind', 'description'):
        table.add_column(column)
    for p in PRESETS.values():
        table.add_row(p.name, str(p.count), str(p.dims), p.kind, p.description)
    console.print(table)


def main():
    cli(obj={})


if __name__ == '__main__':
    main()
