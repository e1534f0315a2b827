"""Plain-text result files of a run: ledger, shell modes, Γ traces, field snapshots and plot series."""

from __future__ import annotations

import csv
from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any

import numpy as np
from loguru import logger

from fsiheat.config import RunConfig, echo_config
from fsiheat.errors import OutputError
from fsiheat.fluid import FluidState
from fsiheat.ledger import EnergyLedger
from fsiheat.trajectory import Frame, Trajectory
from fsiheat.types import FloatArray

SNAPSHOT_MAGIC = "# fsiheat field snapshot"
SNAPSHOT_COLUMNS = ("rho", "m1", "m2", "theta")
SHELL_MODE_COLUMNS = ("window", "time", "mode", "w_re", "w_im", "v_re", "v_im", "theta_re", "theta_im")
GAMMA_TRACE_COLUMNS = ("window", "time", "node", "y", "w", "w_t", "theta", "v_n", "tau")
ENERGY_SERIES = (
    "window",
    "time",
    "total_energy",
    "fluid_kinetic",
    "fluid_internal",
    "artificial_pressure",
    "shell_kinetic",
    "shell_bending",
    "shell_rotational",
    "shell_thermal",
    "radiation",
    "slack",
    "cumulative_slack",
)
MONITOR_SERIES = (
    "window",
    "time",
    "exterior_mass",
    "exterior_radiation",
    "exterior_viscous",
    "korn",
    "strip_pressure",
    "min_shell_theta",
    "helmholtz",
    "entropy_production",
    "penalty_defect",
)


@contextmanager
def _open(path: Path, mode: str = "w") -> Iterator[IO[str]]:
    try:
        with path.open(mode, newline="", encoding="utf-8") as handle:
            yield handle
    except OSError as exc:
        raise OutputError(exc.strerror or str(exc), path=str(path)) from exc


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with _open(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


# ---------------------------------------------------------------------- snapshots


@dataclass(frozen=True, eq=False)
class Snapshot:
    window: int
    time: float
    n: int
    half_width: float
    state: FluidState


def write_snapshot(path: Path, frame: Frame, half_width: float) -> Path:
    """Header with grid metadata, then one row per cell (row-major, x first) of ρ, m₁, m₂, ϑ."""
    fluid = frame.fluid
    n = fluid.rho.shape[0]
    table = np.column_stack(
        [fluid.rho.ravel(), fluid.momentum[..., 0].ravel(), fluid.momentum[..., 1].ravel(), fluid.theta.ravel()]
    )
    header = "\n".join(
        [
            SNAPSHOT_MAGIC.removeprefix("# "),
            f"window = {frame.window}",
            f"time = {frame.time!r}",
            f"n = {n}",
            f"half_width = {half_width!r}",
            f"columns = {' '.join(SNAPSHOT_COLUMNS)}",
        ]
    )
    with _open(path) as handle:
        np.savetxt(handle, table, fmt="%.17g", header=header, comments="# ")
    return path


def read_snapshot(path: Path) -> Snapshot:
    meta: dict[str, str] = {}
    with _open(path, "r") as handle:
        first = handle.readline().rstrip("\n")
        if first != SNAPSHOT_MAGIC:
            raise OutputError("not a field snapshot", path=str(path))
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
    try:
        n = int(meta["n"])
        table = np.loadtxt(path, comments="#", ndmin=2)
        window, time, half_width = int(meta["window"]), float(meta["time"]), float(meta["half_width"])
    except (KeyError, ValueError) as exc:
        raise OutputError(f"malformed snapshot ({exc})", path=str(path)) from exc
    if table.shape != (n * n, len(SNAPSHOT_COLUMNS)):
        raise OutputError(f"expected {n * n} rows of {len(SNAPSHOT_COLUMNS)} values, got {table.shape}", path=str(path))
    rho = table[:, 0].reshape(n, n)
    momentum = np.stack([table[:, 1].reshape(n, n), table[:, 2].reshape(n, n)], axis=-1)
    return Snapshot(
        window=window,
        time=time,
        n=n,
        half_width=half_width,
        state=FluidState(rho=rho, momentum=momentum, theta=table[:, 3].reshape(n, n)),
    )


# ---------------------------------------------------------------------- Γ data


def _shell_mode_rows(frames: Iterable[Frame]) -> Iterator[list[Any]]:
    for frame in frames:
        shell = frame.shell
        for mode in range(shell.modes + 1):
            w, v, theta = shell.w_hat[mode], shell.v_hat[mode], shell.theta_hat[mode]
            yield [frame.window - 1, frame.time, mode, w.real, w.imag, v.real, v.imag, theta.real, theta.imag]


def _gamma_trace_rows(frames: Iterable[Frame]) -> Iterator[list[Any]]:
    for frame in frames:
        w = frame.displacement
        normal_velocity = frame.normal_velocity_trace
        for node, y in enumerate(w.nodes):
            yield [
                frame.window - 1,
                frame.time,
                node,
                float(y),
                float(w.values[node]),
                float(frame.shell_velocity[node]),
                float(frame.shell_theta[node]),
                float(normal_velocity[node]),
                float(frame.theta_trace[node]),
            ]


def _series(ledger: EnergyLedger, columns: Sequence[str]) -> Iterator[list[Any]]:
    for row in ledger:
        yield [getattr(row, name) for name in columns]


def _write_ledger(ledger: EnergyLedger, path: Path) -> Path:
    try:
        return ledger.write_csv(path)
    except OSError as exc:
        raise OutputError(exc.strerror or str(exc), path=str(path)) from exc


def snapshot_windows(frames: Sequence[Frame], every: int) -> list[Frame]:
    """Frames whose window index is a multiple of `every`, plus the last one; none when `every` is 0."""
    if every <= 0 or not frames:
        return []
    chosen = [frame for frame in frames if frame.window % every == 0]
    if chosen[-1] is not frames[-1]:
        chosen.append(frames[-1])
    return chosen


def write_outputs(
    trajectory: Trajectory,
    ledger: EnergyLedger,
    directory: Path,
    config: RunConfig | None = None,
    snapshot_every: int | None = None,
) -> list[Path]:
    """Write every result file of a run into `directory`; returns the written paths."""
    every = snapshot_every if snapshot_every is not None else (config.output.snapshot_every if config else 0)
    plots = directory / "plots"
    try:
        plots.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(exc.strerror or str(exc), path=str(plots)) from exc

    # the initial frame lives in the snapshots only
    completed = trajectory.frames[1:]
    written = [
        _write_ledger(ledger, directory / "ledger.csv"),
        write_csv(directory / "shell_modes.csv", SHELL_MODE_COLUMNS, _shell_mode_rows(completed)),
        write_csv(directory / "gamma_trace.csv", GAMMA_TRACE_COLUMNS, _gamma_trace_rows(completed)),
        write_csv(plots / "energy.csv", ENERGY_SERIES, _series(ledger, ENERGY_SERIES)),
        write_csv(plots / "monitors.csv", MONITOR_SERIES, _series(ledger, MONITOR_SERIES)),
    ]
    for frame in snapshot_windows(trajectory.frames, every):
        written.append(write_snapshot(directory / f"field_{frame.window:04d}.dat", frame, trajectory.grid.half_width))
    if config is not None:
        echo = directory / "config.echo"
        with _open(echo) as handle:
            handle.write(echo_config(config))
        written.append(echo)
    if trajectory.stopped:
        stop = directory / "STOPPED"
        with _open(stop) as handle:
            handle.write(trajectory.stopped + "\n")
        written.append(stop)
    logger.info("outputs.written directory={} files={}", directory, len(written))
    return written


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with _open(path, "r") as handle:
        reader = csv.reader(handle)
        header = next(reader, [])
        return header, [row for row in reader]


def column_values(path: Path, name: str) -> FloatArray:
    header, rows = read_table(path)
    if name not in header:
        raise OutputError(f"no column {name!r}", path=str(path))
    index = header.index(name)
    return np.array([float(row[index]) for row in rows])
