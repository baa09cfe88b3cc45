"""Main entry point for vpo-lab CLI."""

import typer
from typing import Optional

from vpo_lab.commands.report import report_command
from vpo_lab.commands.run import run_app

app = typer.Typer(
    name="vpo-lab",
    help="vpo-lab - Online preference optimization for diffusion models on toy trajectories",
    add_completion=True,
    no_args_is_help=True,
)

app.add_typer(run_app, name="run")
app.command(name="report", help="Render a finished experiment's summary")(report_command)


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-v",
        help="Show version and exit",
        is_eager=True,
    )
):
    """
    vpo-lab - desk-scale preference alignment for trajectory diffusion models.

    Pretrain a conditional denoiser on synthetic 2-D trajectories, then align
    it with online preference optimization, offline DPO or reward feedback
    learning, and compare the methods across seeds.
    """
    if version:
        from vpo_lab import __version__
        typer.echo(f"vpo-lab version {__version__}")
        raise typer.Exit()

    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())
        raise typer.Exit()


if __name__ == "__main__":
    app()
