"""Experiment subcommands: one per experiment kind, all sharing the same flags."""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import Progress, SpinnerColumn, TextColumn

from vpo_lab.commands.report import render_report
from vpo_lab.core.errors import VpoLabError
from vpo_lab.core.harness import ExperimentKind, RunOutcome, load_experiment_config, run_experiment

console = Console()
err_console = Console(stderr=True)

run_app = typer.Typer(
    name="run",
    help="Run experiments: pretraining, trainers, reward-model evaluation and sweeps",
    no_args_is_help=True,
)


def configure_logging(verbose: bool) -> None:
    """Route library logging through rich on stderr."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def build_overrides(kind: str, **flags: Any) -> Dict[str, Dict[str, Any]]:
    """Map CLI flags onto config-file sections; unset flags stay None."""
    sweep_values = flags.get("sweep_values")
    return {
        "experiment": {
            "kind": kind,
            "seeds": flags.get("seed") or None,
            "output_dir": flags.get("out"),
            "trainer": flags.get("trainer"),
            "workers": flags.get("workers"),
            "eval_samples": flags.get("eval_samples"),
            "candidates_file": flags.get("candidates"),
        },
        "vpo": {
            "steps": flags.get("steps"),
            "n_candidates": flags.get("n_candidates"),
            "k_interval": flags.get("k_interval"),
            "beta": flags.get("beta"),
            "dimension": flags.get("dimension"),
            "feedback": flags.get("feedback"),
        },
        "pretrain": {"epochs": flags.get("epochs")},
        "sweep": {
            "param": flags.get("sweep_param"),
            "values": [v.strip() for v in sweep_values.split(",") if v.strip()] if sweep_values else None,
        },
    }


def _make_command(kind: ExperimentKind) -> Callable:
    def command(
        config: Optional[Path] = typer.Option(None, "--config", "-c", help="JSON config file (flags override it)"),
        seed: Optional[List[int]] = typer.Option(None, "--seed", "-s", help="Run seed; repeat for several"),
        out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
        steps: Optional[int] = typer.Option(None, "--steps", help="Optimization steps per run"),
        n_candidates: Optional[int] = typer.Option(None, "--n-candidates", "-n", help="Candidates per prompt (N)"),
        k_interval: Optional[str] = typer.Option(
            None, "--k-interval", "-k", help="Reference refresh interval K, or 'none' for a fixed reference"
        ),
        beta: Optional[float] = typer.Option(None, "--beta", help="DPO temperature"),
        dimension: Optional[str] = typer.Option(None, "--dimension", "-d", help="Reward dimension used as feedback"),
        feedback: Optional[str] = typer.Option(
            None, "--feedback", "-f", help="Selection signal: trajectory (the dimension) or per_frame"
        ),
        trainer: Optional[str] = typer.Option(None, "--trainer", "-t", help="Trainer used by N/K/dimension sweeps"),
        workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Parallel worker processes"),
        eval_samples: Optional[int] = typer.Option(None, "--eval-samples", help="Held-out samples per prompt"),
        epochs: Optional[int] = typer.Option(None, "--epochs", help="Base-model pretraining epochs"),
        sweep_param: Optional[str] = typer.Option(
            None, "--sweep-param", help="n_candidates, k_interval, dimension, feedback or trainer"
        ),
        sweep_values: Optional[str] = typer.Option(None, "--sweep-values", help="Comma-separated sweep values"),
        candidates: Optional[Path] = typer.Option(
            None, "--candidates", help="Trajectory batch CSV with candidate sets for rm-eval"
        ),
        verbose: bool = typer.Option(False, "--verbose", "-V", help="Debug logging"),
    ):
        configure_logging(verbose)
        try:
            cfg = load_experiment_config(config, build_overrides(
                kind.value,
                seed=seed,
                out=out,
                steps=steps,
                n_candidates=n_candidates,
                k_interval=k_interval,
                beta=beta,
                dimension=dimension,
                feedback=feedback,
                trainer=trainer,
                workers=workers,
                eval_samples=eval_samples,
                epochs=epochs,
                sweep_param=sweep_param,
                sweep_values=sweep_values,
                candidates=candidates,
            ))
        except VpoLabError as e:
            err_console.print(f"[red]Error: {e}[/red]")
            raise typer.Exit(1)

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=err_console,
            transient=True,
        ) as progress:
            task = progress.add_task(f"Running {cfg.kind} into {cfg.output_dir}...", total=None)

            def on_run(outcome: RunOutcome) -> None:
                mark = "[green]✓[/green]" if outcome.ok else "[red]✗[/red]"
                progress.console.print(f"{mark} {outcome.label} seed {outcome.seed}")
                progress.update(task, description=f"Finished {outcome.label} seed {outcome.seed}")

            try:
                report = run_experiment(cfg, on_run=on_run)
            except VpoLabError as e:
                err_console.print(f"[red]Error: {e}[/red]")
                raise typer.Exit(1)

        render_report(report, console)
        console.print(f"[dim]Results written to {cfg.output_dir}[/dim]")
        if report.failures:
            raise typer.Exit(1)

    command.__doc__ = f"Run the {kind.value} experiment."
    return command


for _kind, _help in (
    (ExperimentKind.PRETRAIN, "Pretrain the base denoiser on the toy dataset"),
    (ExperimentKind.ONLINE_VPO, "Online preference optimization with curriculum reference updates"),
    (ExperimentKind.OFFLINE_DPO, "Diffusion-DPO on a fixed pre-collected preference dataset"),
    (ExperimentKind.REFL, "Reward feedback learning baseline"),
    (ExperimentKind.RM_EVAL, "Rank candidate sets with every reward model (MRR, Recall@k)"),
    (ExperimentKind.SWEEP, "Sweep N, K, the reward dimension, the feedback source or the trainer"),
):
    run_app.command(name=_kind.value.replace("_", "-"), help=_help)(_make_command(_kind))
