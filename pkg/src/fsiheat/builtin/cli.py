"""Builtin CLI command adapter."""

# ruff: noqa: B008
from __future__ import annotations

import csv
import io
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import typer
from rich.console import Console

from fsiheat.builtin.render import ReportRenderer
from fsiheat.builtin.settings import load_settings
from fsiheat.config import RunConfig, load_config
from fsiheat.constitutive import default_state_grid, validate_hypotheses
from fsiheat.coupling import STUDY_METRICS, StudyReport
from fsiheat.errors import FsiHeatError
from fsiheat.framework import SimulationFramework
from fsiheat.ledger import EnergyLedger
from fsiheat.manufactured import ConvergenceReport, find_case, residual_convergence
from fsiheat.outputs import write_csv, write_outputs
from fsiheat.utils import parse_sweep

EXIT_DEGENERATE = 2
STUDY_COLUMNS = ("parameter", "value", *STUDY_METRICS, "cumulative_slack", "windows_completed", "stopped")
CONVERGENCE_COLUMNS = ("case", "equation", "level", "residual", "order")

config_opt = typer.Option(None, "--config", "-c", help="Run configuration (`section.key = value` lines)")


def _stdout() -> ReportRenderer:
    return ReportRenderer(Console())


def _stderr() -> ReportRenderer:
    return ReportRenderer(Console(stderr=True))


@contextmanager
def _failures(framework: SimulationFramework, stage: str) -> Iterator[None]:
    """Library and I/O failures become a red message and exit code 1."""
    try:
        yield
    except (FsiHeatError, OSError) as exc:
        framework.notify_error(stage, exc)
        _stderr().error(f"{type(exc).__name__}: {exc}")
        raise typer.Exit(1) from exc


def _load(path: Path | None, windows: int | None = None) -> RunConfig:
    config = load_config(path)
    if windows is not None:
        config = config.model_copy(update={"coupling": config.coupling.model_copy(update={"windows": windows})})
    return config


def run(
    ctx: typer.Context,
    config: Path | None = config_opt,
    out: Path = typer.Option(Path("fsi-out"), "--out", "-o", help="Output directory"),
    windows: int | None = typer.Option(None, "--windows", min=0, help="Override coupling.windows"),
    snapshot_every: int | None = typer.Option(None, "--snapshot-every", min=0, help="Override output.snapshot_every"),
) -> None:
    """March the coupled scheme and write the ledger, Γ data and field snapshots."""

    framework = ctx.ensure_object(SimulationFramework)
    with _failures(framework, "run"):
        run_config = _load(config, windows)
        result = framework.run(run_config)
        write_outputs(result.trajectory, result.ledger, out, config=run_config, snapshot_every=snapshot_every)
    _stdout().run_summary(result, str(out))
    if result.degenerate:
        raise typer.Exit(EXIT_DEGENERATE)


def _study_rows(report: StudyReport) -> Iterator[list[object]]:
    for run_ in report.runs:
        yield [
            report.parameter,
            run_.value,
            *(run_.metric(name) for name in STUDY_METRICS),
            run_.cumulative_slack,
            run_.windows_completed,
            run_.stopped or "",
        ]


def study(
    ctx: typer.Context,
    sweep: str = typer.Option(..., "--sweep", help="Parameter and decreasing values, e.g. k=0.5,0.35,0.25"),
    config: Path | None = config_opt,
    out: Path | None = typer.Option(None, "--out", "-o", help="Write the study table to this CSV file"),
) -> None:
    """Continuation study in k, delta or dt; one run per value."""

    framework = ctx.ensure_object(SimulationFramework)
    try:
        parameter, values = parse_sweep(sweep)
    except (ValueError, ZeroDivisionError) as exc:
        raise typer.BadParameter(str(exc), param_hint="--sweep") from exc
    with _failures(framework, "study"):
        run_config = _load(config)
        report = framework.study(run_config, parameter, values, threads=load_settings().worker_count(len(values)))
        if out is not None:
            write_csv(out, STUDY_COLUMNS, _study_rows(report))
    _stdout().study_table(report)
    if any(run_.stopped for run_ in report.runs):
        raise typer.Exit(EXIT_DEGENERATE)


def _convergence_csv(report: ConvergenceReport) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CONVERGENCE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in report.rows():
        writer.writerow({key: repr(value) if isinstance(value, float) else value for key, value in row.items()})
    return buffer.getvalue()


def mms(
    ctx: typer.Context,
    case: str = typer.Option("A", "--case", help="Manufactured case: A (heat), B (swirl) or C (breathing shell)"),
    levels: int = typer.Option(3, "--levels", min=2, help="Number of refinement levels, doubling from the base"),
    out: Path | None = typer.Option(None, "--out", "-o", help="Write the CSV here instead of stdout"),
) -> None:
    """Residual convergence of a manufactured case as a CSV table."""

    framework = ctx.ensure_object(SimulationFramework)
    with _failures(framework, "mms"):
        chosen = find_case(case, framework.manufactured_cases())
        resolutions = [2**index for index in range(levels)]
        report = residual_convergence(chosen, resolutions, threads=load_settings().worker_count(levels))
        table = _convergence_csv(report)
        if out is not None:
            out.write_text(table, encoding="utf-8")
    if out is None:
        typer.echo(table, nl=False)
    else:
        _stdout().convergence_table(report)


def check(
    ctx: typer.Context,
    ledger: Path = typer.Option(..., "--ledger", help="ledger.csv, or the output directory holding it"),
    tolerance: float = typer.Option(1e-8, "--tolerance", help="Allowed negative slack relative to the initial energy"),
) -> None:
    """Re-validate a written energy ledger."""

    framework = ctx.ensure_object(SimulationFramework)
    path = ledger / "ledger.csv" if ledger.is_dir() else ledger
    with _failures(framework, "check"):
        loaded = EnergyLedger.read_csv(path)
        issues = loaded.validate(tolerance=tolerance)
    _stdout().ledger_issues(issues, len(loaded))
    if issues:
        raise typer.Exit(1)


def validate_model(
    ctx: typer.Context,
    config: Path | None = config_opt,
    points: int = typer.Option(20, "--points", min=2, help="Log-grid points per axis in (ρ, ϑ)"),
) -> None:
    """Check the constitutive hypotheses of the configured gas on a log grid."""

    framework = ctx.ensure_object(SimulationFramework)
    with _failures(framework, "validate-model"):
        run_config = _load(config)
        gas = framework.gas_model(run_config) or run_config.gas_model()
        report = validate_hypotheses(gas, run_config.transport_model(), grid=default_state_grid(points))
    typer.echo(report.render())
    if not report.passed:
        raise typer.Exit(1)


def list_hooks(ctx: typer.Context) -> None:
    """Show hook implementation mapping."""
    framework = ctx.ensure_object(SimulationFramework)
    report = framework.hook_report()
    if not report:
        typer.echo("(no hook implementations)")
        return
    for hook_name, adapter_names in report.items():
        typer.echo(f"{hook_name}: {', '.join(adapter_names)}")
