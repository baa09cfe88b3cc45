"""Render an experiment summary as rich tables."""

from collections import defaultdict
from pathlib import Path
from typing import Dict, List

import numpy as np
import typer
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from vpo_lab.core.errors import VpoLabError
from vpo_lab.core.harness import PRETRAIN_LABEL, ComparisonReport, load_report

console = Console()
err_console = Console(stderr=True)


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}f}"


def runs_table(report: ComparisonReport) -> Table:
    dim = report.dimension
    table = Table(title="Runs", box=box.ROUNDED)
    table.add_column("Label", style="cyan", no_wrap=True)
    table.add_column("Seed", justify="right")
    table.add_column("Status")
    table.add_column(f"Final {dim} (mean ± std)", justify="right")
    table.add_column("Final loss", justify="right")
    table.add_column("Ref updates", justify="right")
    table.add_column("Peak step", justify="right")
    table.add_column("Decline", justify="right")

    for run in report.runs:
        status = "[green]✓ ok[/green]" if run.ok else "[red]✗ failed[/red]"
        stats = run.final_stats.get(dim)
        final = f"{stats[0]:.4f} ± {stats[1]:.4f}" if stats else "-"
        updates = ", ".join(str(s) for s in run.reference_updates) or "-"
        peak = str(run.trend["peak_step"]) if run.trend else "-"
        decline = f"{run.trend['decline']:.1%}" if run.trend else "-"
        table.add_row(run.label, str(run.seed), status, final, _fmt(run.final_loss), updates, peak, decline)
    return table


def methods_table(report: ComparisonReport) -> Table:
    """Final held-out statistics per method, averaged over seeds."""
    table = Table(title="Final held-out rewards (seed average)", box=box.ROUNDED)
    table.add_column("Method", style="cyan", no_wrap=True)
    table.add_column("Seeds", justify="right")
    methods = report.method_reports()
    dims: List[str] = list(next(iter(methods[0].finals.values())).keys()) if methods else []
    for d in dims:
        style = "bold green" if d == report.dimension else "white"
        table.add_column(d, justify="right", style=style)

    for m in methods:
        means = [np.mean([stats[d][0] for stats in m.finals.values()]) for d in dims]
        table.add_row(m.label, str(len(m.finals)), *(_fmt(v) for v in means))
    return table


def comparisons_table(report: ComparisonReport) -> Table:
    table = Table(title=f"Pairwise comparison on {report.dimension}", box=box.ROUNDED)
    table.add_column("A", style="cyan")
    table.add_column("B", style="magenta")
    table.add_column("A wins", justify="right", style="green")
    table.add_column("B wins", justify="right", style="red")
    table.add_column("Ties", justify="right")
    table.add_column("A win rate", justify="right")
    for c in report.comparisons:
        table.add_row(c.a, c.b, str(c.wins), str(c.losses), str(c.ties), f"{c.win_rate:.2f}")
    return table


def ranking_table(report: ComparisonReport) -> Table:
    """Reward-model ranking metrics, averaged over seeds."""
    collected: Dict[str, Dict[str, List[float]]] = defaultdict(lambda: defaultdict(list))
    for run in report.runs:
        for scorer, values in run.ranking.items():
            for metric, value in values.items():
                collected[scorer][metric].append(value)

    table = Table(title="Reward-model ranking against the template oracle", box=box.ROUNDED)
    table.add_column("Scorer", style="cyan", no_wrap=True)
    metrics = list(next(iter(collected.values())).keys()) if collected else []
    for metric in metrics:
        table.add_column(metric.upper() if metric == "mrr" else metric.capitalize(), justify="right")
    for scorer, values in collected.items():
        table.add_row(scorer, *(_fmt(float(np.mean(values[m]))) for m in metrics))
    return table


def render_report(report: ComparisonReport, out: Console = console) -> None:
    out.print(Panel.fit(
        f"[bold blue]Experiment: {report.kind}[/bold blue]  target dimension: [bold]{report.dimension}[/bold]",
        border_style="bright_blue",
    ))
    out.print(runs_table(report))

    if any(run.ranking for run in report.runs):
        out.print(ranking_table(report))
    if report.method_reports():
        out.print(methods_table(report))
    if report.comparisons:
        out.print(comparisons_table(report))

    if report.failures:
        lines = "\n".join(f"[red]✗[/red] {r.label} seed {r.seed}: {r.error}" for r in report.failures)
        out.print(Panel(lines, title="[red]Failed runs[/red]", border_style="red"))
    else:
        trained = [r for r in report.runs if r.label != PRETRAIN_LABEL]
        out.print(f"[green]✓[/green] All {len(trained) or len(report.runs)} run(s) succeeded")


def report_command(
    outdir: Path = typer.Argument(..., help="Experiment output directory (or its summary.json)"),
):
    """Show the summary of a finished experiment."""
    try:
        report = load_report(outdir)
    except VpoLabError as e:
        err_console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(1)

    render_report(report)
    if report.failures:
        raise typer.Exit(1)
