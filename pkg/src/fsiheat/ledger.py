"""Per-window energy ledger of the coupled scheme and its re-validation."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from fsiheat.errors import ValidationError


@dataclass(frozen=True)
class LedgerRow:
    window: int
    time: float
    energy_before: float
    remap_energy: float
    fluid_kinetic: float
    fluid_internal: float
    artificial_pressure: float
    shell_kinetic: float
    shell_bending: float
    shell_rotational: float
    shell_thermal: float
    total_energy: float
    radiation: float
    shell_dissipation_visc: float
    shell_dissipation_heat: float
    penalty_fluid_velocity: float
    penalty_fluid_temperature: float
    penalty_shell_velocity: float
    penalty_shell_temperature: float
    penalty_defect: float
    exterior_mass: float
    exterior_radiation: float
    exterior_viscous: float
    entropy_production: float
    helmholtz: float
    korn: float
    strip_pressure: float
    min_shell_theta: float
    clamp_events: int
    clamp_energy: float
    limiter_fallbacks: int
    slack: float
    cumulative_slack: float

    @property
    def parts_total(self) -> float:
        return (
            self.fluid_kinetic
            + self.fluid_internal
            + self.artificial_pressure
            + self.shell_kinetic
            + self.shell_bending
            + self.shell_rotational
            + self.shell_thermal
        )

    @property
    def exchanged(self) -> float:
        return (
            self.penalty_fluid_velocity
            + self.penalty_fluid_temperature
            + self.penalty_shell_velocity
            + self.penalty_shell_temperature
        )

    def expected_slack(self) -> float:
        return window_slack(
            self.energy_before,
            self.total_energy,
            self.radiation,
            self.shell_dissipation_visc + self.shell_dissipation_heat,
            self.exchanged,
            self.clamp_energy,
            self.remap_energy,
        )

    def as_dict(self) -> dict[str, float | int]:
        return asdict(self)


LEDGER_COLUMNS: tuple[str, ...] = tuple(f.name for f in fields(LedgerRow))
_INTEGER_COLUMNS = frozenset({"window", "clamp_events", "limiter_fallbacks"})
# monitors that report NaN when their precondition fails
MONITOR_COLUMNS = frozenset({"helmholtz", "korn", "strip_pressure"})


def window_slack(
    energy_before: float,
    energy_after: float,
    radiation: float,
    shell_dissipation: float,
    exchanged: float,
    clamp_energy: float = 0.0,
    remap_energy: float = 0.0,
) -> float:
    """Signed slack of the telescoped energy inequality for one window.

    Measured from the previous row's total (`energy_before - remap_energy`), so the slacks of a run
    telescope back to E0.
    """
    return energy_before - remap_energy - energy_after - radiation - shell_dissipation - exchanged + clamp_energy


@dataclass(frozen=True)
class LedgerIssue:
    window: int
    column: str
    message: str

    def __str__(self) -> str:
        return f"window {self.window}: {self.column}: {self.message}"


@dataclass
class EnergyLedger:
    rows: list[LedgerRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[LedgerRow]:
        return iter(self.rows)

    @property
    def initial_energy(self) -> float:
        return self.rows[0].energy_before - self.rows[0].remap_energy if self.rows else 0.0

    @property
    def cumulative_slack(self) -> float:
        return self.rows[-1].cumulative_slack if self.rows else 0.0

    def column(self, name: str) -> list[float]:
        if name not in LEDGER_COLUMNS:
            raise ValidationError("unknown ledger column", [name])
        return [getattr(row, name) for row in self.rows]

    def append(self, **values: float) -> LedgerRow:
        """Add a row; `slack` and `cumulative_slack` are derived here."""
        window = int(values.pop("window", len(self.rows)))
        partial = {name: values[name] for name in LEDGER_COLUMNS if name in values}
        missing = sorted(set(LEDGER_COLUMNS) - set(partial) - {"window", "slack", "cumulative_slack"})
        if missing:
            raise ValidationError("ledger row is missing columns", missing)
        slack = window_slack(
            partial["energy_before"],
            partial["total_energy"],
            partial["radiation"],
            partial["shell_dissipation_visc"] + partial["shell_dissipation_heat"],
            partial["penalty_fluid_velocity"]
            + partial["penalty_fluid_temperature"]
            + partial["penalty_shell_velocity"]
            + partial["penalty_shell_temperature"],
            partial["clamp_energy"],
            partial["remap_energy"],
        )
        partial.pop("slack", None)
        partial.pop("cumulative_slack", None)
        cumulative = self.cumulative_slack + slack
        row = LedgerRow(window=window, slack=slack, cumulative_slack=cumulative, **partial)  # type: ignore[arg-type]
        self.rows.append(row)
        return row

    def validate(self, tolerance: float = 1e-8, sum_tolerance: float = 1e-12) -> list[LedgerIssue]:
        return validate_rows(self.rows, tolerance=tolerance, sum_tolerance=sum_tolerance)

    def write_csv(self, path: Path) -> Path:
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(LEDGER_COLUMNS)
            for row in self.rows:
                writer.writerow([_format_cell(getattr(row, name)) for name in LEDGER_COLUMNS])
        return path

    @classmethod
    def read_csv(cls, path: Path) -> EnergyLedger:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration as exc:
                raise ValidationError(f"{path} is empty", [str(path)]) from exc
            if tuple(header) != LEDGER_COLUMNS:
                unexpected = [name for name in header if name not in LEDGER_COLUMNS]
                missing = [name for name in LEDGER_COLUMNS if name not in header]
                raise ValidationError(f"{path} does not carry the ledger columns in order", unexpected + missing)
            rows = [_parse_row(record, line) for line, record in enumerate(reader, start=2)]
        return cls(rows=rows)


def _format_cell(value: float | int) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse_row(record: list[str], line: int) -> LedgerRow:
    if len(record) != len(LEDGER_COLUMNS):
        raise ValidationError(f"ledger line {line} has {len(record)} cells", [line])
    values: dict[str, float | int] = {}
    for name, cell in zip(LEDGER_COLUMNS, record, strict=True):
        try:
            values[name] = int(cell) if name in _INTEGER_COLUMNS else float(cell)
        except ValueError as exc:
            raise ValidationError(f"ledger line {line}: {name} is not a number", [cell]) from exc
    return LedgerRow(**values)  # type: ignore[arg-type]


def validate_rows(
    rows: Iterable[LedgerRow], tolerance: float = 1e-8, sum_tolerance: float = 1e-12
) -> list[LedgerIssue]:
    """Check every row against the energy inequality, the column sums and the slack arithmetic.

    Tolerances are relative to the first row's `energy_before`.
    """
    rows = list(rows)
    if not rows:
        return []
    scale = max(abs(rows[0].energy_before), 1e-300)
    issues: list[LedgerIssue] = []
    running = 0.0
    previous_window = -1
    previous_total: float | None = None
    for row in rows:
        if row.window <= previous_window:
            issues.append(LedgerIssue(row.window, "window", "windows are not increasing"))
        previous_window = row.window
        for name in LEDGER_COLUMNS:
            value = getattr(row, name)
            if name not in MONITOR_COLUMNS and isinstance(value, float) and math.isnan(value):
                issues.append(LedgerIssue(row.window, name, "is NaN"))
        if abs(row.parts_total - row.total_energy) > sum_tolerance * max(scale, abs(row.total_energy)):
            issues.append(
                LedgerIssue(row.window, "total_energy", f"parts sum to {row.parts_total!r}, not {row.total_energy!r}")
            )
        if abs(row.expected_slack() - row.slack) > sum_tolerance * scale * 10.0:
            issues.append(LedgerIssue(row.window, "slack", f"recomputed slack is {row.expected_slack()!r}"))
        if row.slack < -tolerance * scale:
            issues.append(LedgerIssue(row.window, "slack", f"{row.slack:.3e} below -{tolerance:g}·E0"))
        running += row.slack
        if abs(running - row.cumulative_slack) > sum_tolerance * scale * 10.0 * (row.window + 1):
            issues.append(LedgerIssue(row.window, "cumulative_slack", f"running sum is {running!r}"))
        if row.cumulative_slack < -tolerance * scale:
            issues.append(
                LedgerIssue(row.window, "cumulative_slack", f"{row.cumulative_slack:.3e} below -{tolerance:g}·E0")
            )
        start = row.energy_before - row.remap_energy
        if previous_total is not None and abs(start - previous_total) > sum_tolerance * scale * 10.0:
            issues.append(
                LedgerIssue(row.window, "remap_energy", f"window starts from {start!r}, not {previous_total!r}")
            )
        previous_total = row.total_energy
        for name in (
            "radiation",
            "shell_dissipation_visc",
            "shell_dissipation_heat",
            "penalty_defect",
            "exterior_mass",
        ):
            if getattr(row, name) < -tolerance * scale:
                issues.append(LedgerIssue(row.window, name, "is negative"))
        if row.entropy_production < -tolerance * scale:
            issues.append(LedgerIssue(row.window, "entropy_production", "is negative"))
    return issues
