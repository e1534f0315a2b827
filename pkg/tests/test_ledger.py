from __future__ import annotations

import math
from pathlib import Path

import pytest

from fsiheat.errors import ValidationError
from fsiheat.ledger import LEDGER_COLUMNS, EnergyLedger, window_slack


def _values(**overrides: float) -> dict[str, float]:
    derived = {"window", "slack", "cumulative_slack"}
    values: dict[str, float] = {name: 0.0 for name in LEDGER_COLUMNS if name not in derived}
    values.update(
        energy_before=10.0,
        fluid_kinetic=1.0,
        fluid_internal=7.0,
        shell_kinetic=0.5,
        shell_thermal=1.0,
        total_energy=9.5,
        radiation=0.25,
        shell_dissipation_visc=0.125,
        min_shell_theta=1.0,
        helmholtz=math.nan,
        clamp_events=0,
        limiter_fallbacks=0,
    )
    values.update(overrides)
    return values


def test_window_slack_telescopes() -> None:
    assert window_slack(10.0, 9.5, 0.25, 0.125, 0.0) == pytest.approx(0.125)
    assert window_slack(10.0, 9.5, 0.25, 0.125, 0.0, clamp_energy=0.5) == pytest.approx(0.625)
    assert window_slack(10.0, 9.5, 0.25, 0.125, 0.0, remap_energy=0.5) == pytest.approx(-0.375)


def test_append_derives_the_slack_columns() -> None:
    ledger = EnergyLedger()

    first = ledger.append(**_values())
    second = ledger.append(**_values(energy_before=9.5, total_energy=9.5, fluid_internal=7.0, radiation=0.0))

    assert first.window == 0
    assert second.window == 1
    assert first.slack == pytest.approx(0.125)
    assert second.slack == pytest.approx(-0.125)
    assert ledger.cumulative_slack == pytest.approx(0.0)
    assert ledger.initial_energy == 10.0


def test_append_requires_every_column() -> None:
    values = _values()
    del values["radiation"]

    with pytest.raises(ValidationError) as exc_info:
        EnergyLedger().append(**values)

    assert exc_info.value.offending == ["radiation"]


def test_validate_accepts_nan_monitors_and_a_closed_budget() -> None:
    ledger = EnergyLedger()
    ledger.append(**_values())

    assert ledger.validate() == []


def test_validate_flags_a_negative_slack() -> None:
    ledger = EnergyLedger()
    ledger.append(**_values(radiation=1.0))

    issues = ledger.validate()

    assert [issue.column for issue in issues] == ["slack", "cumulative_slack"]
    assert str(issues[0]).startswith("window 0: slack:")


def test_validate_flags_mismatched_parts_and_nan_columns() -> None:
    ledger = EnergyLedger()
    ledger.append(**_values(fluid_kinetic=2.0, exterior_mass=math.nan))

    columns = {issue.column for issue in ledger.validate()}

    assert columns == {"total_energy", "exterior_mass"}


def test_csv_round_trip_keeps_every_value(tmp_path: Path) -> None:
    ledger = EnergyLedger()
    ledger.append(**_values())
    ledger.append(
        **_values(energy_before=9.5, total_energy=9.5, radiation=0.0, shell_dissipation_visc=0.0, clamp_events=3)
    )

    loaded = EnergyLedger.read_csv(ledger.write_csv(tmp_path / "ledger.csv"))

    assert len(loaded) == 2
    assert loaded.column("clamp_events") == [0, 3]
    assert loaded.column("slack") == ledger.column("slack")
    assert math.isnan(loaded.rows[0].helmholtz)
    assert loaded.validate() == []


def test_read_csv_rejects_a_foreign_header(tmp_path: Path) -> None:
    path = tmp_path / "ledger.csv"
    path.write_text("window,time,energy\n0,0.0,1.0\n", encoding="utf-8")

    with pytest.raises(ValidationError, match="ledger columns"):
        EnergyLedger.read_csv(path)


def test_read_csv_rejects_text_cells(tmp_path: Path) -> None:
    ledger = EnergyLedger()
    ledger.append(**_values())
    path = ledger.write_csv(tmp_path / "ledger.csv")
    header, row = path.read_text(encoding="utf-8").splitlines()
    path.write_text(header + "\n" + row.replace("0.25", "lots", 1) + "\n", encoding="utf-8")

    with pytest.raises(ValidationError, match="not a number"):
        EnergyLedger.read_csv(path)


def test_unknown_column() -> None:
    with pytest.raises(ValidationError):
        EnergyLedger().column("vorticity")


def test_remap_energy_is_charged_to_the_slack() -> None:
    ledger = EnergyLedger()
    ledger.append(**_values(shell_dissipation_visc=0.0))
    # the second window starts 0.125 above the first window's total
    ledger.append(
        **_values(
            energy_before=9.625, remap_energy=0.125, total_energy=9.5, radiation=0.0, shell_dissipation_visc=0.0
        )
    )

    assert ledger.initial_energy == 10.0
    assert ledger.rows[1].slack == pytest.approx(0.0)
    assert ledger.cumulative_slack == pytest.approx(10.0 - 9.5 - 0.25)
    assert ledger.validate() == []


def test_validate_flags_an_unrecorded_jump_between_windows() -> None:
    ledger = EnergyLedger()
    ledger.append(**_values())
    ledger.append(**_values(energy_before=9.625, total_energy=9.5, radiation=0.0, shell_dissipation_visc=0.0))

    assert [issue.column for issue in ledger.validate()] == ["remap_energy"]


def test_validate_flags_a_drifting_cumulative_slack() -> None:
    ledger = EnergyLedger()
    ledger.append(**_values(shell_dissipation_visc=0.25 + 9e-8))
    ledger.append(**_values(energy_before=9.5, total_energy=9.5, radiation=0.0, shell_dissipation_visc=9e-8))

    issues = ledger.validate()

    assert [(issue.window, issue.column) for issue in issues] == [(1, "cumulative_slack")]
