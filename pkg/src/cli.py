"""Command-line interface for dynquant."""

import logging
from pathlib import Path
from typing import Annotated, NoReturn

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from src import __version__
from src.errors import ConfigError, NumericalError
from src.models.diagnostics import RunSummary
from src.services.config_service import ConfigService
from src.services.jko_service import JkoService
from src.services.render_service import RenderService
from src.services.selftest_service import SelftestService
from src.services.simulation_service import SimulationService

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

app = typer.Typer(
    name="dynquant",
    help="Gradient flows of semi-discrete energies: density, atoms and transport.",
    add_completion=False,
    no_args_is_help=True,
)
console = Console()


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"[bold blue]dynquant[/bold blue] version {__version__}")
        raise typer.Exit()


def verbose_callback(value: bool) -> None:
    """Route log records through rich."""
    logging.basicConfig(
        level=logging.DEBUG if value else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


@app.callback()
def main_callback(
    version: Annotated[
        bool | None,
        typer.Option(
            "--version",
            "-v",
            help="Show version and exit.",
            callback=version_callback,
            is_eager=True,
        ),
    ] = None,
    verbose: Annotated[
        bool,
        typer.Option(
            "--verbose",
            help="Log solver progress.",
            callback=verbose_callback,
        ),
    ] = False,
) -> None:
    """Dynquant - Wasserstein gradient flows coupled to optimal quantization."""
    pass


def _fail(message: str, code: int) -> NoReturn:
    console.print(f"[red]{message}[/red]")
    raise typer.Exit(code)


def _print_summary(summary: RunSummary, title: str) -> None:
    lines = [
        f"  Steps: {summary.steps}",
        f"  Frames: {summary.frames}",
        f"  Final energy: {summary.final_energy:.6g}",
        f"  Alive atoms: {summary.alive_count}",
    ]
    if summary.clamp_events:
        lines.append(f"  Clamp events: {summary.clamp_events}")
    if summary.energy_violations:
        lines.append(
            f"  [yellow]Energy increases above slack: "
            f"{summary.energy_violations}[/yellow]"
        )
    metrics = summary.crystallization
    if metrics.defined:
        lines.append(f"  Hexatic order: {metrics.hex_order:.4f}")
    if summary.distance_sq_total is not None and summary.distance_budget is not None:
        lines.append(
            f"  Sum of d^2: {summary.distance_sq_total:.4e} "
            f"(bound {summary.distance_budget:.4e})"
        )
    lines.append(f"  Output: {summary.out_dir}")
    console.print(
        Panel(
            "[bold green]Run finished[/bold green]\n\n" + "\n".join(lines),
            title=title,
            border_style="blue",
        )
    )


@app.command()
def simulate(
    config: Annotated[
        Path,
        typer.Option("--config", "-c", help="Configuration file (key = value)."),
    ],
    out: Annotated[
        Path | None,
        typer.Option("--out", "-o", help="Output directory (overrides out_dir)."),
    ] = None,
) -> None:
    """Run the splitting scheme and write snapshots plus series.csv."""
    try:
        settings = ConfigService().load(config)
        if out is not None:
            settings = settings.model_copy(update={"out_dir": out})
        if settings.mode == "jko1d":
            _fail("mode = jko1d runs through `dynquant jko1d`", EXIT_CONFIG)
        summary = SimulationService(settings).run()
    except (ConfigError, ValidationError, FileNotFoundError) as err:
        _fail(f"Configuration error: {err}", EXIT_CONFIG)
    except NumericalError as err:
        _fail(f"Numerical failure: {err}", EXIT_NUMERICAL)
    else:
        _print_summary(summary, f"dynquant {settings.mode}")


@app.command()
def jko1d(
    config: Annotated[
        Path,
        typer.Option("--config", "-c", help="Configuration file (key = value)."),
    ],
) -> None:
    """Run the 1D minimizing-movement oracle and write jko_series.csv."""
    try:
        settings = ConfigService().load(config)
        summary, _ = JkoService(settings).run()
    except (ConfigError, ValidationError, FileNotFoundError) as err:
        _fail(f"Configuration error: {err}", EXIT_CONFIG)
    except NumericalError as err:
        _fail(f"Numerical failure: {err}", EXIT_NUMERICAL)
    else:
        _print_summary(summary, "dynquant jko1d")


@app.command()
def render(
    run_dir: Annotated[
        Path,
        typer.Option("--in", "-i", help="Directory written by `simulate`."),
    ],
    frame: Annotated[
        int | None,
        typer.Option("--frame", "-f", help="Frame to render (default: all)."),
    ] = None,
    scale: Annotated[
        int,
        typer.Option("--scale", "-s", min=1, help="Pixels per grid cell."),
    ] = 4,
    fixed_colormap: Annotated[
        bool,
        typer.Option(
            "--fixed-colormap",
            help="Use one color scale for all frames instead of per frame.",
        ),
    ] = False,
) -> None:
    """Render density, Laguerre cells and atoms to PNG."""
    try:
        service = RenderService(run_dir)
        if frame is None:
            written = service.render_all(scale, fixed_colormap)
        else:
            written = [service.render_frame(frame, scale, fixed_colormap)]
    except (ConfigError, ValidationError, FileNotFoundError, ValueError) as err:
        _fail(f"Cannot render: {err}", EXIT_CONFIG)
    else:
        for path in written:
            console.print(f"[green]✓[/green] {path}")


@app.command()
def selftest() -> None:
    """Run the built-in oracle checks."""
    results = SelftestService().run()
    table = Table(title="dynquant selftest")
    table.add_column("Check", style="bold")
    table.add_column("Result")
    table.add_column("Details")
    table.add_column("Time", justify="right")
    for result in results:
        state = "[green]pass[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, state, result.detail, f"{result.seconds:.2f}s")
    console.print(table)

    failed = [result for result in results if not result.passed]
    if failed:
        _fail(f"{len(failed)} of {len(results)} checks failed", EXIT_NUMERICAL)
    console.print(f"[green]✓ All {len(results)} checks passed[/green]")


@app.command()
def info() -> None:
    """Show configuration keys and their defaults."""
    table = Table(title=f"dynquant v{__version__} configuration keys")
    table.add_column("Key", style="cyan")
    table.add_column("Default")
    table.add_column("Description")
    for key, default, description in ConfigService.defaults():
        table.add_row(key, default, description)
    console.print(table)


def main() -> None:
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
