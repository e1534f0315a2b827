from __future__ import annotations

from functools import cache
from pathlib import Path

import numpy as np
import pytest

from fsiheat.config import RunConfig, echo_config, parse_config
from fsiheat.coupling import RunResult, build_problem, run_splitting
from fsiheat.errors import OutputError
from fsiheat.ledger import EnergyLedger
from fsiheat.outputs import (
    GAMMA_TRACE_COLUMNS,
    SHELL_MODE_COLUMNS,
    column_values,
    read_snapshot,
    read_table,
    snapshot_windows,
    write_csv,
    write_outputs,
    write_snapshot,
)

SMALL_RUN = """
fluid.nx = 16
geometry.n_gamma = 16
shell.modes = 4
shell.substeps = 2
coupling.windows = 2
"""


def _config(extra: str = "") -> RunConfig:
    return parse_config(SMALL_RUN + extra)


@cache
def _run() -> RunResult:
    return run_splitting(build_problem(_config()))


def _names(directory: Path) -> set[str]:
    return {str(path.relative_to(directory)) for path in directory.rglob("*") if path.is_file()}


def test_run_writes_every_result_file(tmp_path: Path) -> None:
    result = _run()

    write_outputs(result.trajectory, result.ledger, tmp_path, _config())

    assert _names(tmp_path) == {
        "ledger.csv",
        "shell_modes.csv",
        "gamma_trace.csv",
        "plots/energy.csv",
        "plots/monitors.csv",
        "field_0000.dat",
        "field_0002.dat",
        "config.echo",
    }
    assert (tmp_path / "config.echo").read_text(encoding="utf-8") == echo_config(_config())


def test_gamma_tables_hold_one_row_per_window_and_node(tmp_path: Path) -> None:
    result = _run()
    write_outputs(result.trajectory, result.ledger, tmp_path, snapshot_every=0)

    modes_header, modes = read_table(tmp_path / "shell_modes.csv")
    trace_header, trace = read_table(tmp_path / "gamma_trace.csv")

    assert tuple(modes_header) == SHELL_MODE_COLUMNS
    assert tuple(trace_header) == GAMMA_TRACE_COLUMNS
    assert len(modes) == 2 * 5
    assert len(trace) == 2 * 16
    np.testing.assert_array_equal(np.unique(column_values(tmp_path / "gamma_trace.csv", "window")), [0.0, 1.0])
    assert not (tmp_path / "field_0000.dat").exists()


def test_written_ledger_reloads_and_validates(tmp_path: Path) -> None:
    result = _run()
    write_outputs(result.trajectory, result.ledger, tmp_path)

    loaded = EnergyLedger.read_csv(tmp_path / "ledger.csv")

    assert len(loaded) == len(result.ledger)
    assert loaded.column("total_energy") == result.ledger.column("total_energy")
    assert loaded.validate() == []


def test_snapshot_round_trip_is_exact(tmp_path: Path) -> None:
    trajectory = _run().trajectory
    frame = trajectory.final

    snapshot = read_snapshot(write_snapshot(tmp_path / "field.dat", frame, trajectory.grid.half_width))

    assert snapshot.window == frame.window
    assert snapshot.time == frame.time
    assert snapshot.n == 16
    np.testing.assert_array_equal(snapshot.state.rho, frame.fluid.rho)
    np.testing.assert_array_equal(snapshot.state.momentum, frame.fluid.momentum)
    np.testing.assert_array_equal(snapshot.state.theta, frame.fluid.theta)


def test_snapshot_reader_rejects_other_files(tmp_path: Path) -> None:
    path = tmp_path / "field.dat"
    path.write_text("rho m1 m2 theta\n1 0 0 1\n", encoding="utf-8")

    with pytest.raises(OutputError, match="not a field snapshot"):
        read_snapshot(path)


def test_snapshot_reader_checks_the_cell_count(tmp_path: Path) -> None:
    trajectory = _run().trajectory
    path = write_snapshot(tmp_path / "field.dat", trajectory.final, trajectory.grid.half_width)
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")

    with pytest.raises(OutputError, match="expected 256 rows"):
        read_snapshot(path)


def test_snapshot_windows() -> None:
    frames = _run().trajectory.frames

    assert [frame.window for frame in snapshot_windows(frames, 1)] == [0, 1, 2]
    assert [frame.window for frame in snapshot_windows(frames, 4)] == [0, 2]
    assert snapshot_windows(frames, 0) == []


def test_stopped_run_leaves_a_marker(tmp_path: Path) -> None:
    config = _config("initial.w_amplitude = 0.45\ncoupling.margin_cells = 1")
    result = run_splitting(build_problem(config))

    write_outputs(result.trajectory, result.ledger, tmp_path, config)

    assert (tmp_path / "STOPPED").read_text(encoding="utf-8").strip() == result.trajectory.stopped
    header, rows = read_table(tmp_path / "ledger.csv")
    assert header[0] == "window"
    assert rows == []


def test_unwritable_directory_raises_output_error(tmp_path: Path) -> None:
    blocker = tmp_path / "taken"
    blocker.write_text("", encoding="utf-8")

    with pytest.raises(OutputError) as exc_info:
        write_csv(blocker / "table.csv", ["a"], [[1]])

    assert exc_info.value.path == str(blocker / "table.csv")


def test_column_values_needs_the_column(tmp_path: Path) -> None:
    path = write_csv(tmp_path / "table.csv", ["a", "b"], [[1, 2.5], [3, 4.5]])

    np.testing.assert_array_equal(column_values(path, "b"), [2.5, 4.5])
    with pytest.raises(OutputError, match="no column"):
        column_values(path, "c")
