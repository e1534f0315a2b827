"""Rich rendering of run summaries, study tables and errors."""

from __future__ import annotations

import math
from dataclasses import dataclass

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from fsiheat.coupling import RunResult, StudyReport
from fsiheat.ledger import LedgerIssue
from fsiheat.manufactured import ConvergenceReport


def _number(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.4e}"


@dataclass
class ReportRenderer:
    console: Console

    def run_summary(self, result: RunResult, directory: str) -> None:
        ledger = result.ledger
        rows = ledger.rows
        body = (
            f"windows: {result.windows_completed}\n"
            f"initial energy: {_number(ledger.initial_energy)}\n"
            f"final energy: {_number(rows[-1].total_energy) if rows else '-'}\n"
            f"cumulative slack: {_number(ledger.cumulative_slack)}\n"
            f"outputs: {directory}"
        )
        if result.degenerate:
            self.console.print(Panel(f"{body}\nstopped: {result.stopped}", title="run stopped", border_style="yellow"))
        else:
            self.console.print(Panel(body, title="run", border_style="cyan"))

    def study_table(self, report: StudyReport) -> None:
        table = Table(title=f"continuation in {report.parameter}")
        table.add_column(report.parameter, justify="right")
        for name in ("exterior_mass", "exterior_radiation", "exterior_viscous", "penalization_defect"):
            table.add_column(name, justify="right")
        table.add_column("windows", justify="right")
        for run in report.runs:
            table.add_row(
                f"{run.value:g}",
                _number(run.exterior_mass),
                _number(run.exterior_radiation),
                _number(run.exterior_viscous),
                _number(run.penalization_defect),
                str(run.windows_completed) + (" (stopped)" if run.stopped else ""),
            )
        self.console.print(table)
        if report.slopes:
            slopes = ", ".join(f"{name}={_number(value)}" for name, value in report.slopes.items())
            self.console.print(Text(f"log-log slopes: {slopes}", style="bright_black"))

    def convergence_table(self, report: ConvergenceReport) -> None:
        table = Table(title=f"manufactured case {report.case}")
        table.add_column("equation")
        for level in report.levels:
            table.add_column(f"level {level}", justify="right")
        table.add_column("order", justify="right")
        for equation, values in report.residuals.items():
            table.add_row(equation, *(_number(value) for value in values), _number(report.orders[equation]))
        self.console.print(table)

    def ledger_issues(self, issues: list[LedgerIssue], rows: int) -> None:
        if not issues:
            self.console.print(Text(f"ledger ok: {rows} windows", style="green"))
            return
        for issue in issues:
            self.console.print(Text(str(issue), style="red"))

    def error(self, text: str) -> None:
        if not text.strip():
            return
        self.console.print(Panel(text, title="error", border_style="red"))
