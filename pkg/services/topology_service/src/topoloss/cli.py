"""
topoloss command line.

Exit codes: 0 on success, 1 on invalid input, config or a diverging run, 2 on file errors.
Run settings resolve as built-in defaults < --config JSON < flags.
"""

import functools
import json
import logging
import math
from pathlib import Path
from typing import Annotated, Any, Dict, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from .complex_core import build_rips
from .datasets import CirclesConfig, circles_from_config
from .diagram_metrics import bottleneck, restoration_match, shrinking_cost, wasserstein
from .errors import DataIOError, InvalidInputError, NonFiniteLossError
from .experiment import SWEEP_GRID, RunConfig, run_embedding, run_sweep, trace_artifacts
from .optimizer import check_trace
from .persistence import compute_persistence, compute_persistence_dim0
from .serialization import (
    diagram_to_records,
    matching_to_dict,
    read_diagram,
    read_json_config,
    read_point_cloud,
    read_trace,
    write_diagram,
    write_point_cloud,
)
from .settings import API_HOST, API_PORT, N_JOBS, OUTPUT_DIR, configure_logging

app = typer.Typer(
    name="topoloss",
    help="Topology-aware loss: persistence, diagram distances and regularized embeddings",
    add_completion=False,
    rich_markup_mode="rich",
)

console = Console()
logger = logging.getLogger(__name__)

EXIT_INVALID = 1
EXIT_IO = 2


def handle_errors(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (InvalidInputError, ValidationError, NonFiniteLossError) as e:
            console.print(f"[bold red]Error:[/bold red] {e}")
            raise typer.Exit(EXIT_INVALID)
        except (DataIOError, OSError) as e:
            console.print(f"[bold red]I/O error:[/bold red] {e}")
            raise typer.Exit(EXIT_IO)

    return wrapper


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log at DEBUG level")] = False,
):
    configure_logging(verbose)


def _parse_q(value: str) -> float:
    if value.lower() in ("inf", "infinity"):
        return float("inf")
    try:
        return float(value)
    except ValueError:
        raise InvalidInputError(f"q must be a number or 'inf', got {value!r}") from None


def _parse_eta(value: Optional[str]):
    if value is None or value == "theorem":
        return value
    try:
        return float(value)
    except ValueError:
        raise InvalidInputError(f"eta must be a number or 'theorem', got {value!r}") from None


def _prior(beta: Optional[int], birth: Optional[float], death: Optional[float]) -> Optional[Dict[str, Any]]:
    if death is None:
        if beta is not None or birth is not None:
            raise InvalidInputError("--prior-beta and --prior-birth need --prior-death")
        return None
    return {"beta": 1 if beta is None else beta, "birth": 0.0 if birth is None else birth, "death": death}


def _resolve_config(config_file: Optional[Path], overrides: Dict[str, Any]) -> RunConfig:
    settings: Dict[str, Any] = read_json_config(config_file) if config_file else {}
    settings.update({key: value for key, value in overrides.items() if value is not None})
    return RunConfig(**settings)


@app.command()
@handle_errors
def generate(
    out: Annotated[Path, typer.Option("--out", help="Output CSV path")] = Path("circles.csv"),
    n_per_circle: Annotated[int, typer.Option("--n-per-circle")] = 100,
    r1: Annotated[float, typer.Option("--r1")] = 1.0,
    r2: Annotated[float, typer.Option("--r2")] = 2.0,
    noise: Annotated[float, typer.Option("--noise")] = 0.05,
    z_offset: Annotated[float, typer.Option("--z-offset")] = 0.5,
    seed: Annotated[int, typer.Option("--seed")] = 0,
):
    """Sample two nested circles in R^3 and write them as CSV."""
    circles = CirclesConfig(n_per_circle=n_per_circle, radii=(r1, r2), noise=noise, z_offset=z_offset, seed=seed)
    cloud, _ = circles_from_config(circles)
    write_point_cloud(out, cloud)
    console.print(f"Wrote {cloud.n_points} points to [bold]{out}[/bold]")


@app.command()
@handle_errors
def ph(
    input: Annotated[Path, typer.Argument(help="Point cloud CSV")],
    out: Annotated[Optional[Path], typer.Option("--out", help="Diagram JSON path (stdout if omitted)")] = None,
    hom_dim: Annotated[int, typer.Option("--hom-dim", help="Highest homology dimension (0 or 1)")] = 0,
    max_radius: Annotated[Optional[float], typer.Option("--max-radius")] = None,
):
    """Rips persistence diagram of a point cloud."""
    cloud = read_point_cloud(input)
    filtration = build_rips(cloud, max_dim=hom_dim + 1, max_radius=max_radius or float("inf"))
    diagram = compute_persistence_dim0(filtration) if hom_dim == 0 else compute_persistence(filtration, hom_dim)
    if out is None:
        typer.echo(json.dumps({"points": diagram_to_records(diagram)}, indent=2))
    else:
        write_diagram(out, diagram)
        console.print(f"Wrote {len(diagram)} points to [bold]{out}[/bold]")


@app.command()
@handle_errors
def dist(
    diagram_a: Annotated[Path, typer.Argument(help="First diagram JSON")],
    diagram_b: Annotated[Path, typer.Argument(help="Second diagram JSON")],
    q: Annotated[str, typer.Option("--q", help="Wasserstein order, or 'inf'")] = "2",
    restoration: Annotated[
        bool, typer.Option("--restoration", help="Treat the first diagram as ground truth and report the restoration matching")
    ] = False,
    dim: Annotated[
        Optional[int], typer.Option("--dim", help="Keep only points of this homology dimension; ids are renumbered")
    ] = None,
):
    """Distance and matching between two diagrams, as JSON on stdout."""
    first = read_diagram(diagram_a)
    second = read_diagram(diagram_b)
    if dim is not None:
        first, second = first.restrict(dim), second.restrict(dim)
    order = _parse_q(q)
    distance, matching = wasserstein(first, second, order)
    report: Dict[str, Any] = {
        "q": "inf" if math.isinf(order) else order,
        "distance": distance,
        "matching": matching_to_dict(matching),
        "bottleneck": bottleneck(first, second),
    }
    if restoration:
        restored = restoration_match(first, second)
        report["restoration"] = {
            "matching": matching_to_dict(restored),
            "restoration_cost": restored.cost,
            "shrinking_cost": shrinking_cost(second, restored),
        }
    typer.echo(json.dumps(report, indent=2))


@app.command()
@handle_errors
def embed(
    config: Annotated[Optional[Path], typer.Option("--config", help="JSON run config")] = None,
    input: Annotated[Optional[Path], typer.Option("--input", help="Point cloud CSV; nested circles if omitted")] = None,
    out: Annotated[Optional[Path], typer.Option("--out", help="Run directory")] = None,
    seed: Annotated[Optional[int], typer.Option("--seed")] = None,
    eta: Annotated[Optional[str], typer.Option("--eta", help="Step size or 'theorem'")] = None,
    epsilon: Annotated[Optional[float], typer.Option("--epsilon")] = None,
    max_iters: Annotated[Optional[int], typer.Option("--max-iters")] = None,
    lambda_topo: Annotated[Optional[float], typer.Option("--lambda-topo")] = None,
    lambda_reg: Annotated[Optional[float], typer.Option("--lambda-reg")] = None,
    k: Annotated[Optional[int], typer.Option("--k")] = None,
    perplexity: Annotated[Optional[float], typer.Option("--perplexity")] = None,
    truth: Annotated[Optional[Path], typer.Option("--truth", help="Ground-truth diagram JSON")] = None,
    prior_beta: Annotated[Optional[int], typer.Option("--prior-beta", help="Prior: number of features")] = None,
    prior_birth: Annotated[Optional[float], typer.Option("--prior-birth", help="Prior: birth of each feature")] = None,
    prior_death: Annotated[Optional[float], typer.Option("--prior-death", help="Prior: death of each feature")] = None,
    init_checkpoint: Annotated[
        Optional[Path], typer.Option("--init-checkpoint", help="network.json to start training from")
    ] = None,
):
    """Train the embedding network with the topology-aware loss."""
    run_config = _resolve_config(
        config,
        {
            "input": str(input) if input else None,
            "seed": seed,
            "eta": _parse_eta(eta),
            "epsilon": epsilon,
            "max_iters": max_iters,
            "lambda_topo": lambda_topo,
            "lambda_reg": lambda_reg,
            "k": k,
            "perplexity": perplexity,
            "truth": str(truth) if truth else None,
            "prior": _prior(prior_beta, prior_birth, prior_death),
            "init_checkpoint": str(init_checkpoint) if init_checkpoint else None,
        },
    )
    out_dir = out or Path(OUTPUT_DIR) / f"embed_seed{run_config.seed}"
    summary, result = run_embedding(run_config, out_dir)

    table = Table(title="Embedding run", show_header=True, header_style="bold magenta")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    table.add_row("iterations", str(summary.iterations))
    table.add_row("stop reason", summary.stop_reason)
    table.add_row("eta", f"{result.eta:.6g}")
    table.add_row("final G", f"{summary.final_g:.8f}")
    table.add_row("persistence ratio", f"{summary.persistence_ratio:.4f}")
    if summary.first_descent_violation is not None:
        table.add_row("first descent violation", str(summary.first_descent_violation))
    console.print(table)
    console.print(f"Artifacts in [bold]{out_dir}[/bold]")


@app.command()
@handle_errors
def trace(
    trace_csv: Annotated[Path, typer.Argument(help="trace.csv from an embed run")],
    epsilon: Annotated[Optional[float], typer.Option("--epsilon", help="Stop criterion the run used")] = None,
    out: Annotated[Optional[Path], typer.Option("--out", help="Directory for SVG plots")] = None,
    rows: Annotated[int, typer.Option("--rows", help="Leading rows to print")] = 5,
):
    """Print the leading three-phase rows, check the descent properties and plot them."""
    records = read_trace(trace_csv)
    table = Table(title="Three-phase trace", show_header=True, header_style="bold magenta")
    table.add_column("")
    shown = records[:rows]
    for record in shown:
        table.add_column(f"t={record.t}", justify="right")
    table.add_row("G_t(W_t)", *(f"{r.g_t_wt:.5f}" for r in shown))
    table.add_row("G_t(W_t+1)", *(f"{r.g_t_wt1:.5f}" for r in shown))
    table.add_row("G_t+1(W_t+1)", *(f"{r.g_t1_wt1:.5f}" for r in shown))
    console.print(table)

    report = check_trace(records, epsilon=epsilon)
    checks = Table(title="Trace checks", show_header=True, header_style="bold magenta")
    checks.add_column("Property")
    checks.add_column("Result")
    checks.add_column("First violation", justify="right")
    for check in report.checks:
        verdict = "[green]pass[/green]" if check.passed else "[red]fail[/red]"
        checks.add_row(check.name, verdict, "" if check.first_violation is None else str(check.first_violation))
    console.print(checks)

    plot_dir = out or trace_csv.parent
    for path in trace_artifacts(records, plot_dir):
        console.print(f"Wrote [bold]{path}[/bold]")


@app.command()
@handle_errors
def sweep(
    config: Annotated[Optional[Path], typer.Option("--config", help="JSON run config")] = None,
    out: Annotated[Optional[Path], typer.Option("--out", help="Sweep directory")] = None,
    seed: Annotated[Optional[int], typer.Option("--seed")] = None,
    eta: Annotated[Optional[str], typer.Option("--eta")] = None,
    epsilon: Annotated[Optional[float], typer.Option("--epsilon")] = None,
    max_iters: Annotated[Optional[int], typer.Option("--max-iters")] = None,
    k: Annotated[Optional[int], typer.Option("--k")] = None,
    perplexity: Annotated[Optional[float], typer.Option("--perplexity")] = None,
    truth: Annotated[Optional[Path], typer.Option("--truth", help="Ground-truth diagram JSON")] = None,
    prior_beta: Annotated[Optional[int], typer.Option("--prior-beta", help="Prior: number of features")] = None,
    prior_birth: Annotated[Optional[float], typer.Option("--prior-birth", help="Prior: birth of each feature")] = None,
    prior_death: Annotated[Optional[float], typer.Option("--prior-death", help="Prior: death of each feature")] = None,
    init_checkpoint: Annotated[
        Optional[Path], typer.Option("--init-checkpoint", help="network.json to start training from")
    ] = None,
    n_jobs: Annotated[int, typer.Option("--n-jobs", help="Parallel cells (-1: all cores)")] = N_JOBS,
):
    """Run the embedding for every (lambda_topo, lambda_reg) cell of the sweep grid."""
    run_config = _resolve_config(
        config,
        {
            "seed": seed,
            "eta": _parse_eta(eta),
            "epsilon": epsilon,
            "max_iters": max_iters,
            "k": k,
            "perplexity": perplexity,
            "truth": str(truth) if truth else None,
            "prior": _prior(prior_beta, prior_birth, prior_death),
            "init_checkpoint": str(init_checkpoint) if init_checkpoint else None,
        },
    )
    out_dir = out or Path(OUTPUT_DIR) / f"sweep_seed{run_config.seed}"
    summaries = run_sweep(run_config, out_dir, SWEEP_GRID, n_jobs=n_jobs)

    table = Table(title="Sweep", show_header=True, header_style="bold magenta")
    for column in ("lambda_topo", "lambda_reg", "iterations", "stop", "final G", "persistence ratio"):
        table.add_column(column, justify="right")
    for s in summaries:
        table.add_row(
            f"{s.lambda_topo:g}",
            f"{s.lambda_reg:g}",
            str(s.iterations),
            s.stop_reason,
            f"{s.final_g:.6f}",
            f"{s.persistence_ratio:.4f}",
        )
    console.print(table)
    console.print(f"Summary in [bold]{out_dir / 'summary.csv'}[/bold]")


@app.command()
def serve(
    host: Annotated[str, typer.Option("--host")] = API_HOST,
    port: Annotated[int, typer.Option("--port")] = API_PORT,
):
    """Serve the HTTP API with uvicorn."""
    import uvicorn

    from .api import app as api_app

    uvicorn.run(api_app, host=host, port=port)


if __name__ == "__main__":
    app()
