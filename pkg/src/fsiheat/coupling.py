"""Window-by-window splitting of shell and fluid, and continuation sweeps over k, δ and Δt.

Each window of length Δt runs the shell against the fluid traces recorded one
window earlier, rebuilds the deformed geometry from the new displacement and
then runs the fluid against the shell data of the same window.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TypeVar

import numpy as np
from loguru import logger

from fsiheat.config import SWEEPABLE, RunConfig
from fsiheat.constitutive import GasModel, TransportModel, validate_hypotheses
from fsiheat.diagnostics import (
    check_exterior_density,
    exterior_mass,
    korn_quotient,
    min_shell_theta,
    penalization_defect,
    pressure_strip_monitor,
)
from fsiheat.errors import DomainError, GeometryDegeneracyError, SolverError, ValidationError
from fsiheat.extension import (
    ApproxParams,
    CoefficientFields,
    ExtendedGas,
    build_coefficient_fields,
    extend_initial_data,
)
from fsiheat.fluid import FluidParams, FluidSolver, FluidState, FluidStep, initial_fluid_state
from fsiheat.geometry import CellGrid, DisplacementSample, ProfileFGamma, ReferenceGeometry, build_geometry
from fsiheat.interface import InterfaceStencil, build_stencil
from fsiheat.ledger import EnergyLedger, LedgerRow
from fsiheat.structure import ShellParams, ShellState, ShellStep, advance_window, shell_energy
from fsiheat.trajectory import Frame, Trajectory, capture_frame
from fsiheat.types import FloatArray

T = TypeVar("T")
WindowCallback = Callable[[LedgerRow, Frame], None]
_NOISE_MODES = 4


def time_shift(history: Callable[[float], T], t: float, dt: float) -> T:
    """T_Δt f(t): f(t − Δt) for t >= Δt and f(0) on [0, Δt]."""
    if t < 0.0:
        raise DomainError(f"time shift needs t >= 0, got {t}")
    return history(max(t - dt, 0.0))


@dataclass
class TraceHistory:
    """Normal velocity and temperature traces recorded at the end of each window."""

    initial_velocity: FloatArray
    initial_theta: FloatArray
    records: list[tuple[FloatArray, FloatArray]] = field(default_factory=list)

    def record(self, velocity: FloatArray, theta: FloatArray) -> None:
        self.records.append((np.array(velocity, dtype=float), np.array(theta, dtype=float)))

    def lagged(self, window: int) -> tuple[FloatArray, FloatArray]:
        if window < 0:
            raise DomainError(f"window index must be non-negative, got {window}")
        if window == 0:
            return self.initial_velocity, self.initial_theta
        if window > len(self.records):
            raise ValidationError("trace history does not reach the requested window", [window, len(self.records)])
        return self.records[window - 1]

    def at(self, t: float, dt: float) -> tuple[FloatArray, FloatArray]:
        """Trace datum in force at time t, recorded on the window grid."""
        return time_shift(lambda s: self.lagged(int(math.floor(s / dt + 1e-9))), t, dt)


@dataclass(frozen=True, eq=False)
class SimulationProblem:
    config: RunConfig
    geometry: ReferenceGeometry
    grid: CellGrid
    approx: ApproxParams
    gas: ExtendedGas
    transport: TransportModel
    shell: ShellParams
    fluid: FluidSolver


def build_problem(config: RunConfig, gas: GasModel | None = None) -> SimulationProblem:
    """Turn a validated configuration into the solver objects of one run."""
    section = config.geometry
    lower_outer, lower_inner, upper_inner, upper_outer = section.plateau
    profile = ProfileFGamma(
        lower_outer=lower_outer,
        lower_inner=lower_inner,
        upper_inner=upper_inner,
        upper_outer=upper_outer,
        alpha=section.mollifier,
    )
    geometry = build_geometry(
        chart=section.chart,
        radius=section.radius,
        aspect=section.aspect,
        a=section.a,
        b=section.b,
        n_gamma=section.n_gamma,
        profile=profile,
    )
    grid = CellGrid(config.fluid.nx, geometry.half_width)
    gas = gas or config.gas_model()
    transport = config.transport_model()
    report = validate_hypotheses(gas, transport)
    if not report.passed:
        raise ValidationError("constitutive hypotheses fail", report.failures())
    approx = config.approx_params
    extended = ExtendedGas(gas, approx)
    shell = ShellParams(
        alpha1=config.shell.alpha1,
        alpha2=config.shell.alpha2,
        delta=approx.delta,
        dt=approx.dt,
        modes=config.shell.modes,
        substeps=config.shell.substeps,
        stiffness=config.shell.stiffness,
        thermal_coupling=config.shell.thermal_coupling,
        boundary_damping=config.boundary_damping,
    )
    fluid = FluidSolver(
        grid=grid,
        gas=extended,
        transport=transport,
        params=approx,
        settings=FluidParams(
            cfl=config.fluid.cfl,
            kernel_radius=config.fluid.kernel_radius,
            theta_floor=config.fluid.theta_floor,
            max_substeps=config.fluid.max_substeps,
            cg_tol=config.fluid.cg_tol,
            picard=config.fluid.picard,
            dilute=config.fluid.dilute,
        ),
    )
    return SimulationProblem(
        config=config,
        geometry=geometry,
        grid=grid,
        approx=approx,
        gas=extended,
        transport=transport,
        shell=shell,
        fluid=fluid,
    )


@dataclass(frozen=True, eq=False)
class InitialState:
    fluid: FluidState
    shell: ShellState
    displacement: DisplacementSample
    coefficients: CoefficientFields


def _smooth_noise(grid: CellGrid, seed: int) -> FloatArray:
    """Low cosine modes with standard normal amplitudes, scaled to max |·| = 1."""
    rng = np.random.default_rng(seed)
    amplitudes = rng.standard_normal((_NOISE_MODES, _NOISE_MODES))
    x, y = grid.mesh
    s = (x + grid.half_width) / (2.0 * grid.half_width)
    r = (y + grid.half_width) / (2.0 * grid.half_width)
    field = np.zeros_like(x)
    for i in range(_NOISE_MODES):
        for j in range(_NOISE_MODES):
            field += amplitudes[i, j] * np.cos(np.pi * (i + 1) * s) * np.cos(np.pi * (j + 1) * r)
    return field / max(float(np.max(np.abs(field))), 1e-300)


def build_initial_state(problem: SimulationProblem) -> InitialState:
    """Shell data on the Γ-nodes and fluid data on Ω^{w₀}, extended by vacuum outside."""
    config, geometry, grid = problem.config, problem.geometry, problem.grid
    initial = config.initial
    nodes = np.arange(geometry.n_gamma) / geometry.n_gamma
    pattern = np.cos(2.0 * np.pi * initial.w_mode * nodes)
    w_samples = initial.w_amplitude * pattern
    v_samples = initial.v_amplitude * pattern
    theta_samples = np.full(geometry.n_gamma, initial.theta_shell)
    shell = ShellState.from_samples(w_samples, v_samples, theta_samples, problem.shell.modes)
    w0 = shell.displacement(geometry.n_gamma)
    report = geometry.check_injectivity(w0)
    if not report.admissible:
        raise ValidationError("initial displacement leaves the tube", [f"margin={report.margin:.3e}"])

    core = config.geometry.radius * min(1.0, config.geometry.aspect if config.geometry.chart == "ellipse" else 1.0)
    core += config.geometry.a
    if initial.swirl and core <= 0.0:
        raise ValidationError("swirl needs a positive core radius R + a", [core])
    noise = initial.noise * _smooth_noise(grid, initial.seed) if initial.noise > 0.0 else np.zeros((grid.n, grid.n))

    def rho0(x: FloatArray, y: FloatArray) -> FloatArray:
        return initial.rho * (1.0 + noise)

    def momentum0(x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        r2 = (x**2 + y**2) / core**2
        envelope = np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0) * initial.swirl
        density = rho0(x, y)
        return -y * envelope * density, x * envelope * density

    def theta0(x: FloatArray, y: FloatArray) -> FloatArray:
        return np.full_like(x, initial.theta)

    data = extend_initial_data(
        geometry,
        w0,
        grid,
        rho0,
        momentum0,
        theta0,
        problem.approx,
        theta_exterior=config.extension.theta_exterior,
    )
    coefficients = build_coefficient_fields(geometry, w0, problem.approx, grid, band_cells=config.extension.band_cells)
    fluid = initial_fluid_state(data.rho, data.momentum, data.theta)
    return InitialState(fluid=fluid, shell=shell, displacement=w0, coefficients=coefficients)


@dataclass(eq=False)
class RunResult:
    trajectory: Trajectory
    ledger: EnergyLedger
    stopped: GeometryDegeneracyError | None = None

    @property
    def degenerate(self) -> bool:
        return self.stopped is not None

    @property
    def windows_completed(self) -> int:
        return len(self.ledger)


def _guarded(what: str, compute: Callable[[], float]) -> float:
    """Monitor value, or NaN when the monitor's precondition fails."""
    try:
        return compute()
    except ValidationError as exc:
        logger.debug("coupling.monitor_skipped monitor={} reason={}", what, exc)
        return float("nan")


class _Splitting:
    """Mutable march state of one run."""

    def __init__(self, problem: SimulationProblem, on_window: WindowCallback | None) -> None:
        self.problem = problem
        self.on_window = on_window
        config = problem.config
        start = build_initial_state(problem)
        self.fluid = start.fluid
        self.shell = start.shell
        self.coefficients = start.coefficients
        self.displacement = start.displacement
        self.stencil = self._stencil(start.displacement)
        velocity, theta = self._traces(self.fluid)
        self.trajectory = Trajectory(problem.geometry, problem.grid, problem.approx.delta)
        self.trajectory.append(
            capture_frame(
                0, 0.0, self.fluid, self.shell, self.displacement, self.coefficients, self.stencil, velocity, theta
            )
        )
        _, v0, theta0 = self.shell.samples(problem.geometry.n_gamma)
        self.history = TraceHistory(initial_velocity=v0, initial_theta=theta0)
        self.ledger = EnergyLedger()
        self.previous_total = (
            problem.fluid.fluid_energy(self.fluid, self.coefficients).total
            + shell_energy(self.shell, problem.shell).total
        )
        self.margin = config.coupling.margin_cells * problem.grid.h

    def _stencil(self, w: DisplacementSample) -> InterfaceStencil:
        config = self.problem.config
        return build_stencil(
            self.problem.geometry,
            w,
            self.problem.grid,
            kernel_radius=config.fluid.kernel_radius,
            penalty_measure=config.coupling.penalty_measure,
        )

    def _traces(self, fluid: FluidState) -> tuple[FloatArray, FloatArray]:
        return self.stencil.interpolate(fluid.velocity()), self.stencil.interpolate(fluid.theta)

    def advance(self, window: int) -> LedgerRow:
        problem, config = self.problem, self.problem.config
        geometry, grid = problem.geometry, problem.grid
        lagged_v, lagged_tau = self.history.lagged(window)
        shell_step = advance_window(self.shell, lagged_v, lagged_tau, problem.shell)

        w_new = shell_step.state.displacement(geometry.n_gamma)
        report = geometry.check_injectivity(w_new)
        if report.margin < self.margin:
            raise GeometryDegeneracyError(
                f"injectivity margin {report.margin:.3e} fell below {self.margin:.3e}",
                margin=report.margin,
                window=window,
            )
        coefficients = build_coefficient_fields(
            geometry, w_new, problem.approx, grid, band_cells=config.extension.band_cells
        )
        self.stencil = self._stencil(w_new)
        self.fluid, remap_clamp = problem.fluid.remap(self.fluid, self.coefficients, coefficients)
        energy_before = problem.fluid.fluid_energy(self.fluid, coefficients).total + shell_step.energy_before.total

        fluid_step = problem.fluid.advance_window(
            self.fluid,
            coefficients,
            self.stencil,
            shell_step.velocity_midpoints,
            shell_step.theta_midpoints,
            window=window,
        )
        if config.coupling.trace_sampling == "average":
            velocity_sample, theta_sample = fluid_step.mean_velocity_trace, fluid_step.mean_theta_trace
        else:
            velocity_sample, theta_sample = fluid_step.final_velocity_trace, fluid_step.final_theta_trace
        normals = self.stencil.reference_normals
        self.history.record(np.sum(velocity_sample * normals, axis=-1), theta_sample)

        row = self._ledger_row(window, energy_before, shell_step, fluid_step, w_new, coefficients, remap_clamp)
        self.fluid, self.shell = fluid_step.state, shell_step.state
        self.coefficients, self.displacement = coefficients, w_new
        self.previous_total = row.total_energy
        frame = capture_frame(
            window + 1,
            row.time,
            self.fluid,
            self.shell,
            w_new,
            coefficients,
            self.stencil,
            fluid_step.final_velocity_trace,
            fluid_step.final_theta_trace,
        )
        self.trajectory.append(frame)
        if self.on_window is not None:
            self.on_window(row, frame)
        return row

    def _ledger_row(
        self,
        window: int,
        energy_before: float,
        shell_step: ShellStep,
        fluid_step: FluidStep,
        w_new: DisplacementSample,
        coefficients: CoefficientFields,
        remap_clamp: float = 0.0,
    ) -> LedgerRow:
        problem, config = self.problem, self.problem.config
        geometry, grid = problem.geometry, problem.grid
        state = fluid_step.state
        fluid_energy = problem.fluid.fluid_energy(state, coefficients)
        shell_after = shell_step.energy_after
        _, _, theta_samples = shell_step.state.samples(geometry.n_gamma)
        strip_k = config.diagnostics.strip_k

        def strip() -> float:
            report = pressure_strip_monitor(state, coefficients, w_new, geometry, grid, problem.gas, strip_k)
            if not report.certified:
                logger.debug(
                    "coupling.strip_uncertified window={} min_div={:.3e} bound={:.3e}",
                    window,
                    report.min_divergence,
                    report.divergence_bound,
                )
            return report.integral

        return self.ledger.append(
            window=window,
            time=(window + 1) * problem.approx.dt,
            energy_before=energy_before,
            remap_energy=energy_before - self.previous_total,
            fluid_kinetic=fluid_energy.kinetic,
            fluid_internal=fluid_energy.internal,
            artificial_pressure=fluid_energy.artificial,
            shell_kinetic=shell_after.kinetic,
            shell_bending=shell_after.bending,
            shell_rotational=shell_after.rotational,
            shell_thermal=shell_after.thermal,
            total_energy=fluid_energy.total + shell_after.total,
            radiation=fluid_step.radiation,
            shell_dissipation_visc=shell_step.dissipation_visc,
            shell_dissipation_heat=shell_step.dissipation_heat,
            penalty_fluid_velocity=fluid_step.exchange_velocity,
            penalty_fluid_temperature=fluid_step.exchange_temperature,
            penalty_shell_velocity=shell_step.exchange_velocity,
            penalty_shell_temperature=shell_step.exchange_temperature,
            penalty_defect=fluid_step.penalization_defect,
            exterior_mass=exterior_mass(state, coefficients, grid),
            exterior_radiation=fluid_step.radiation_exterior,
            exterior_viscous=fluid_step.viscous_exterior,
            entropy_production=fluid_step.entropy_production,
            helmholtz=_guarded("helmholtz", lambda: problem.fluid.helmholtz_ledger(state, coefficients)),
            korn=_guarded(
                "korn",
                lambda: korn_quotient(
                    state,
                    w_new,
                    geometry,
                    grid,
                    q=config.diagnostics.korn_q,
                    mass_floor=config.diagnostics.mass_floor,
                ),
            ),
            strip_pressure=_guarded("strip", strip),
            min_shell_theta=min_shell_theta(theta_samples),
            clamp_events=fluid_step.clamp_events,
            clamp_energy=fluid_step.clamp_energy + remap_clamp,
            limiter_fallbacks=fluid_step.limiter_fallbacks,
        )


def run_splitting(
    problem: SimulationProblem, windows: int | None = None, on_window: WindowCallback | None = None
) -> RunResult:
    """March `windows` windows (default from the configuration); stop cleanly on degeneracy."""
    windows = problem.config.coupling.windows if windows is None else windows
    if windows < 0:
        raise ValidationError("window count must be non-negative", [windows])
    march = _Splitting(problem, on_window)
    stopped: GeometryDegeneracyError | None = None
    for window in range(windows):
        try:
            row = march.advance(window)
        except GeometryDegeneracyError as exc:
            exc.window = window if exc.window is None else exc.window
            stopped = exc
            march.trajectory.stopped = str(exc)
            logger.warning("coupling.degenerate window={} margin={} reason={}", window, exc.margin, exc)
            break
        except SolverError as exc:
            if exc.window is None:
                raise SolverError(str(exc), window=window) from exc
            raise
        logger.info(
            "coupling.window window={} time={:.5f} total={:.9e} slack={:.3e} radiation={:.3e}",
            window,
            row.time,
            row.total_energy,
            row.slack,
            row.radiation,
        )
    logger.info(
        "coupling.done windows={} cumulative_slack={:.3e} stopped={}",
        len(march.ledger),
        march.ledger.cumulative_slack,
        stopped is not None,
    )
    return RunResult(trajectory=march.trajectory, ledger=march.ledger, stopped=stopped)


# ---------------------------------------------------------------------- continuation


STUDY_METRICS = (
    "exterior_mass",
    "exterior_radiation",
    "exterior_viscous",
    "penalization_defect",
    "artificial_pressure",
)


@dataclass(frozen=True)
class StudyRun:
    parameter: str
    value: float
    exterior_mass: float
    exterior_radiation: float
    exterior_viscous: float
    penalization_defect: float
    artificial_pressure: float
    cumulative_slack: float
    windows_completed: int
    stopped: str | None = None

    def metric(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass(frozen=True)
class StudyReport:
    parameter: str
    runs: tuple[StudyRun, ...] = ()
    slopes: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.runs)


def fit_slope(values: Sequence[float], metric: Sequence[float]) -> float:
    """Least-squares slope of log(metric) against log(value); NaN unless every entry is positive."""
    x = np.asarray(values, dtype=float)
    y = np.asarray(metric, dtype=float)
    if x.size < 2 or np.any(x <= 0.0) or np.any(~np.isfinite(y)) or np.any(y <= 0.0):
        return float("nan")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def summarize_run(parameter: str, value: float, result: RunResult) -> StudyRun:
    ledger = result.ledger
    final_artificial = ledger.rows[-1].artificial_pressure if ledger.rows else 0.0
    return StudyRun(
        parameter=parameter,
        value=value,
        exterior_mass=check_exterior_density(result.trajectory),
        exterior_radiation=float(sum(ledger.column("exterior_radiation"))),
        exterior_viscous=float(sum(ledger.column("exterior_viscous"))),
        penalization_defect=penalization_defect(result.trajectory),
        artificial_pressure=final_artificial,
        cumulative_slack=ledger.cumulative_slack,
        windows_completed=len(ledger),
        stopped=None if result.stopped is None else str(result.stopped),
    )


def continuation_study(
    config: RunConfig,
    parameter: str,
    sweep: Sequence[float],
    threads: int = 1,
    gas: GasModel | None = None,
) -> StudyReport:
    """One run per sweep value; a Δt sweep keeps the horizon fixed."""
    if parameter not in SWEEPABLE:
        raise ValidationError(f"cannot sweep {parameter!r}", sorted(SWEEPABLE))
    values = [float(value) for value in sweep]
    if not values:
        return StudyReport(parameter=parameter)
    if any(later >= earlier for earlier, later in zip(values, values[1:], strict=False)):
        raise ValidationError("sweep must be strictly decreasing", values)
    if threads < 1:
        raise ValidationError("thread count must be at least 1", [threads])

    horizon = config.horizon

    def run_one(value: float) -> StudyRun:
        variant = config.with_parameter(parameter, value)
        if parameter == "dt":
            windows = max(1, round(horizon / value))
            variant = variant.model_copy(update={"coupling": variant.coupling.model_copy(update={"windows": windows})})
        logger.info("study.run parameter={} value={}", parameter, value)
        result = run_splitting(build_problem(variant, gas=gas))
        return summarize_run(parameter, value, result)

    workers = min(threads, len(values))
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="fsiheat-study") as pool:
        runs = tuple(pool.map(run_one, values))
    slopes = {name: fit_slope(values, [run.metric(name) for run in runs]) for name in STUDY_METRICS}
    logger.info("study.done parameter={} runs={} slopes={}", parameter, len(runs), slopes)
    return StudyReport(parameter=parameter, runs=runs, slopes=slopes)
