"""Manufactured solutions and the residual studies built on them.

Three cases ship with the package:

A  heat diffusion at rest with ϑ = 1 + ε e^{-t} cos(kx) cos(ky), uniform coefficients;
B  a divergence-free swirl u = g(t)(−s(x)s'(y), s'(x)s(y)), s = sin²(kx), over a
   perturbed density at constant temperature;
C  a breathing disk of radius R(t) = R₀(1 + ε sin t) with u = (Ṙ/R) x, coupled to a
   spatially uniform shell displacement w = R − R₀.

Source terms are derived by hand below and discrete residuals put the exact fields
through the solver kernels. For case C the exact fields are sampled onto a
trajectory and the weak entropy and energy balances are assembled from the
solver's energy density, pressure and stress; `breathing_identities` integrates
the same balances by quadrature of the closed form as a cross-check.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy import linalg

from fsiheat.constitutive import GasModel, TransportModel, entropy_production
from fsiheat.diagnostics import build_test_pair, energy_balance_residual, entropy_inequality_residual
from fsiheat.errors import ValidationError
from fsiheat.extension import ApproxParams, CoefficientFields, ExtendedGas, build_coefficient_fields
from fsiheat.fluid import FluidSolver, FluidState
from fsiheat.geometry import CellGrid, DisplacementSample, build_geometry
from fsiheat.interface import build_stencil
from fsiheat.structure import ShellParams, ShellState, advance_window
from fsiheat.trajectory import Trajectory, capture_frame
from fsiheat.types import FloatArray

BASE_CELLS = 16
BASE_SUBSTEPS = 4
BASE_BREATHING_CELLS = 32
_HALF_WIDTH = 2.0
_RADIAL_NODES = 6
_ANGULAR_NODES = 32
_BREATHING_MODES = 4
_BREATHING_NODES = 64
_TEST_RADIUS = 0.6

ResidualFn = Callable[[int], dict[str, float]]
IdentityFn = Callable[[int], tuple[float, float]]


@dataclass(frozen=True)
class ManufacturedCase:
    """A closed-form solution with the residuals it drives at refinement level `r`."""

    name: str
    description: str
    equations: tuple[str, ...]
    expected_orders: dict[str, float]
    residuals: ResidualFn = field(repr=False)
    identity: IdentityFn | None = field(default=None, repr=False)

    @property
    def coupled(self) -> bool:
        return self.identity is not None


def uniform_coefficients(grid: CellGrid) -> CoefficientFields:
    ones = np.ones((grid.n, grid.n))
    return CoefficientFields(
        f_omega=ones,
        chi_nu=ones.copy(),
        chi_eta=ones.copy(),
        interior=np.ones((grid.n, grid.n), dtype=bool),
        offset=-ones,
    )


def _rms(values: FloatArray) -> float:
    return float(np.sqrt(np.mean(np.square(values))))


# ---------------------------------------------------------------------- case A


def heat_diffusion_case(
    amplitude: float = 0.1,
    time: float = 0.5,
    gas: GasModel | None = None,
    transport: TransportModel | None = None,
) -> ManufacturedCase:
    gas = gas or GasModel()
    transport = transport or TransportModel()
    wave = np.pi / _HALF_WIDTH

    def residuals(level: int) -> dict[str, float]:
        grid = CellGrid(BASE_CELLS * level, _HALF_WIDTH)
        approx = ApproxParams()
        solver = FluidSolver(grid, ExtendedGas(gas, approx), transport, approx)
        x, y = grid.mesh
        g = amplitude * np.exp(-time)
        cx, cy, sx, sy = np.cos(wave * x), np.cos(wave * y), np.sin(wave * x), np.sin(wave * y)
        theta = 1.0 + g * cx * cy
        theta_t = -g * cx * cy
        grad_sq = (g * wave) ** 2 * (sx**2 * cy**2 + cx**2 * sy**2)
        laplacian = -2.0 * wave**2 * g * cx * cy
        rho = np.ones_like(x)
        capacity = gas.cv * rho + 4.0 * gas.a * theta**3
        # C ϑ_t − κ'(ϑ)|∇ϑ|² − κ(ϑ)Δϑ
        source = capacity * theta_t - transport.kappa_derivative(theta) * grad_sq - transport.kappa(theta) * laplacian

        operator, _, _ = solver.conduction_operator(theta, uniform_coefficients(grid))
        discrete = (operator @ theta.ravel()).reshape(grid.n, grid.n) / grid.cell_area
        return {"temperature": _rms(capacity * theta_t + discrete - source)}

    return ManufacturedCase(
        name="A",
        description="heat diffusion at rest, uniform coefficients",
        equations=("temperature",),
        expected_orders={"temperature": 2.0},
        residuals=residuals,
    )


# ---------------------------------------------------------------------- case B


def swirl_case(
    amplitude: float = 0.2,
    density_amplitude: float = 0.1,
    time: float = 0.25,
    gas: GasModel | None = None,
    approx: ApproxParams | None = None,
) -> ManufacturedCase:
    gas = gas or GasModel()
    approx = approx or ApproxParams()
    wave = np.pi / _HALF_WIDTH

    def residuals(level: int) -> dict[str, float]:
        grid = CellGrid(BASE_CELLS * level, _HALF_WIDTH)
        extended = ExtendedGas(gas, approx)
        solver = FluidSolver(grid, extended, TransportModel(), approx)
        x, y = grid.mesh
        decay = np.exp(-time)
        g = amplitude * decay

        def s(z: FloatArray) -> FloatArray:
            return np.sin(wave * z) ** 2

        def ds(z: FloatArray) -> FloatArray:
            return wave * np.sin(2.0 * wave * z)

        def dds(z: FloatArray) -> FloatArray:
            return 2.0 * wave**2 * np.cos(2.0 * wave * z)

        rho = 1.0 + density_amplitude * decay * np.cos(wave * x) * np.cos(wave * y)
        rho_t = -density_amplitude * decay * np.cos(wave * x) * np.cos(wave * y)
        rho_x = -density_amplitude * decay * wave * np.sin(wave * x) * np.cos(wave * y)
        rho_y = -density_amplitude * decay * wave * np.cos(wave * x) * np.sin(wave * y)

        u1 = -g * s(x) * ds(y)
        u2 = g * ds(x) * s(y)
        u1_x, u1_y = -g * ds(x) * ds(y), -g * s(x) * dds(y)
        u2_x, u2_y = g * dds(x) * s(y), g * ds(x) * ds(y)
        advect_rho = u1 * rho_x + u2 * rho_y
        conv1 = u1 * u1_x + u2 * u1_y
        conv2 = u1 * u2_x + u2 * u2_y
        dp_drho = (
            gas.gamma * gas.c1 * rho ** (gas.gamma - 1.0)
            + gas.c2
            + approx.delta * approx.beta * rho ** (approx.beta - 1.0)
        )

        # u_t = −u for g = A e^{-t}
        source_mass = rho_t + advect_rho
        source_m1 = rho_t * u1 - rho * u1 + advect_rho * u1 + rho * conv1 + dp_drho * rho_x
        source_m2 = rho_t * u2 - rho * u2 + advect_rho * u2 + rho * conv2 + dp_drho * rho_y
        mass_t = rho_t
        m1_t = rho_t * u1 - rho * u1
        m2_t = rho_t * u2 - rho * u2

        chi = np.ones_like(x)
        theta = np.ones_like(x)
        state = FluidState(rho=rho, momentum=np.stack([rho * u1, rho * u2], axis=-1), theta=theta)
        rhs = solver.flux_divergence(state, chi)
        mass = mass_t - rhs[0] - source_mass
        momentum = np.hypot(m1_t - rhs[1] - source_m1, m2_t - rhs[2] - source_m2)
        return {"mass": _rms(mass), "momentum": _rms(momentum)}

    return ManufacturedCase(
        name="B",
        description="compressible swirl with decaying amplitude",
        equations=("mass", "momentum"),
        expected_orders={"mass": 1.0, "momentum": 1.0},
        residuals=residuals,
    )


# ---------------------------------------------------------------------- case C


@dataclass(frozen=True)
class BreathingMode:
    """R(t) = R₀(1 + ε sin t), ρ = ρ₀(R₀/R)², u = (Ṙ/R) x, ϑ = θ = 1."""

    amplitude: float = 0.1
    radius: float = 1.0
    density: float = 1.0
    horizon: float = 1.0
    gas: GasModel = field(default_factory=GasModel)
    transport: TransportModel = field(default_factory=TransportModel)

    def __post_init__(self) -> None:
        if not self.gas.is_prototype:
            raise ValidationError("the breathing mode is derived for the prototype pressure law", ["molecular_law"])
        if not 0.0 <= self.amplitude < 1.0:
            raise ValidationError("breathing amplitude must lie in [0, 1)", [self.amplitude])

    def kinematics(self, t: float) -> tuple[float, float, float]:
        """R, Ṙ, R̈."""
        eps, r0 = self.amplitude, self.radius
        return r0 * (1.0 + eps * np.sin(t)), r0 * eps * np.cos(t), -r0 * eps * np.sin(t)

    def rho(self, t: float) -> float:
        radius, _, _ = self.kinematics(t)
        return self.density * (self.radius / radius) ** 2

    def rate(self, t: float) -> float:
        radius, speed, _ = self.kinematics(t)
        return speed / radius

    def normal_stress(self, t: float) -> float:
        """S_nn = (2/3)μa + 2ζa for u = a x at ϑ = 1."""
        a = self.rate(t)
        return (2.0 / 3.0) * float(self.transport.mu(1.0)) * a + 2.0 * float(self.transport.zeta(1.0)) * a

    def source_energy(self, t: float) -> float:
        """2a(c₂ρ + (4/3)a_rad) − ((4/3)μ + 4ζ)a², also the entropy source at ϑ = 1."""
        a, rho = self.rate(t), self.rho(t)
        mu, zeta = float(self.transport.mu(1.0)), float(self.transport.zeta(1.0))
        return 2.0 * a * (self.gas.c2 * rho + 4.0 / 3.0 * self.gas.a) - (4.0 / 3.0 * mu + 4.0 * zeta) * a**2

    def source_momentum(self, t: float, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        radius, _, accel = self.kinematics(t)
        factor = self.rho(t) * accel / radius
        return factor * x, factor * y

    def source_shell(self, t: float) -> float:
        """w_tt − J(p − S_nn) with J = 2πR; the traction does work R' on the shell."""
        radius, _, accel = self.kinematics(t)
        pressure = float(self.gas.pressure(np.asarray(self.rho(t)), np.asarray(1.0)))
        return accel - 2.0 * np.pi * radius * (pressure - self.normal_stress(t))

    def velocity(self, t: float, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        a = self.rate(t)
        return a * x, a * y


def disk_integral(func: Callable[[FloatArray, FloatArray], FloatArray], radius: float) -> float:
    """Gauss–Legendre in r times the trapezoid rule in angle."""
    nodes, weights = np.polynomial.legendre.leggauss(_RADIAL_NODES)
    r = 0.5 * radius * (nodes + 1.0)
    w_r = 0.5 * radius * weights
    angle = 2.0 * np.pi * np.arange(_ANGULAR_NODES) / _ANGULAR_NODES
    rr, aa = np.meshgrid(r, angle, indexing="ij")
    values = np.broadcast_to(np.asarray(func(rr * np.cos(aa), rr * np.sin(aa)), dtype=float), rr.shape)
    return float(np.sum(values * (w_r * r)[:, None]) * 2.0 * np.pi / _ANGULAR_NODES)


def _time_integral(func: Callable[[float], float], horizon: float, nodes: int) -> float:
    points, weights = np.polynomial.legendre.leggauss(nodes)
    times = 0.5 * horizon * (points + 1.0)
    return float(0.5 * horizon * sum(w * func(float(t)) for t, w in zip(times, weights, strict=True)))


def breathing_identities(mode: BreathingMode, time_nodes: int) -> tuple[float, float]:
    """(entropy, energy) residuals of the coupled balances for the breathing mode."""
    gas = mode.gas

    def energy(t: float) -> float:
        radius, speed, _ = mode.kinematics(t)
        rho = mode.rho(t)
        a = mode.rate(t)
        internal = float(gas.energy_density(np.asarray(rho), np.asarray(1.0)))
        fluid = disk_integral(lambda x, y: 0.5 * rho * a**2 * (x**2 + y**2) + internal, radius)
        return fluid + 0.5 * speed**2

    def power(t: float) -> float:
        radius, speed, _ = mode.kinematics(t)
        f_energy = mode.source_energy(t)

        def density(x: FloatArray, y: FloatArray) -> FloatArray:
            f1, f2 = mode.source_momentum(t, x, y)
            u1, u2 = mode.velocity(t, x, y)
            return f1 * u1 + f2 * u2 + f_energy

        return disk_integral(density, radius) + mode.source_shell(t) * speed

    def entropy(t: float) -> float:
        radius, _, _ = mode.kinematics(t)
        rho_s = float(gas.entropy_density(np.asarray(mode.rho(t)), np.asarray(1.0)))
        return disk_integral(lambda x, y: np.full_like(x, rho_s), radius) + 1.0

    def production(t: float) -> float:
        radius, _, _ = mode.kinematics(t)
        grad_u = mode.rate(t) * np.eye(2)
        sigma = float(entropy_production(mode.transport, np.asarray(1.0), grad_u, np.zeros(2)))
        return disk_integral(lambda x, y: np.full_like(x, sigma + mode.source_energy(t)), radius)

    horizon = mode.horizon
    entropy_residual = entropy(horizon) - entropy(0.0) - _time_integral(production, horizon, time_nodes)
    energy_residual = energy(horizon) - energy(0.0) - _time_integral(power, horizon, time_nodes)
    return entropy_residual, energy_residual


def breathing_trajectory(
    mode: BreathingMode, cells: int, frames: int, params: ApproxParams | None = None, n_gamma: int = _BREATHING_NODES
) -> Trajectory:
    """The exact breathing fields sampled at `frames + 1` equispaced times on an N×N grid."""
    if frames < 1:
        raise ValidationError("a breathing trajectory needs at least one step", [frames])
    params = params or ApproxParams()
    geometry = build_geometry(radius=mode.radius, n_gamma=n_gamma)
    grid = CellGrid(cells, geometry.half_width)
    trajectory = Trajectory(geometry, grid, params.delta)
    x, y = grid.mesh
    for index, t in enumerate(np.linspace(0.0, mode.horizon, frames + 1)):
        radius, speed, _ = mode.kinematics(float(t))
        w = DisplacementSample(np.full(n_gamma, radius - mode.radius), rates=np.full(n_gamma, speed))
        coefficients = build_coefficient_fields(geometry, w, params, grid)
        stencil = build_stencil(geometry, w, grid)
        rho = np.where(coefficients.interior, mode.rho(float(t)), 0.0)
        a = mode.rate(float(t))
        fluid = FluidState(rho=rho, momentum=np.stack([rho * a * x, rho * a * y], axis=-1), theta=np.ones_like(x))
        shell = ShellState.from_samples(w.values, np.full(n_gamma, speed), np.ones(n_gamma), _BREATHING_MODES)
        velocity_trace = stencil.interpolate(fluid.velocity())
        theta_trace = stencil.interpolate(fluid.theta)
        trajectory.append(
            capture_frame(index, float(t), fluid, shell, w, coefficients, stencil, velocity_trace, theta_trace)
        )
    return trajectory


def _breathing_test(t: float, x: FloatArray, y: FloatArray) -> FloatArray:
    # vanishes before the cut-off band, which starts at R − 0.3 >= 0.6
    bump = np.maximum(1.0 - (x**2 + y**2) / _TEST_RADIUS**2, 0.0) ** 6
    return (1.0 + 0.5 * np.sin(t)) * bump


def breathing_weak_residuals(
    mode: BreathingMode, cells: int, params: ApproxParams | None = None
) -> tuple[float, float]:
    """(entropy, energy) weak residuals of the sampled breathing trajectory, radiation sink off.

    Frames are spaced at twice the cell count so the time quadrature refines with the grid.
    """
    params = params or ApproxParams()
    trajectory = breathing_trajectory(mode, cells, 2 * cells, params)
    solver = FluidSolver(trajectory.grid, ExtendedGas(mode.gas, params), mode.transport, params)
    pair = build_test_pair(
        _breathing_test, lambda t, y: np.zeros_like(y), trajectory.geometry, trajectory.frames[0].displacement
    )

    def energy_source(t: float, x: FloatArray, y: FloatArray) -> FloatArray:
        return np.full_like(x, mode.source_energy(t))

    def momentum_source(t: float, x: FloatArray, y: FloatArray) -> FloatArray:
        return np.stack(mode.source_momentum(t, x, y), axis=-1)

    entropy = entropy_inequality_residual(
        trajectory, pair, solver.gas, solver.transport, sink=0.0, source=energy_source
    )
    energy = energy_balance_residual(
        trajectory, pair, solver, sink=0.0, energy_source=energy_source, momentum_source=momentum_source
    )
    logger.debug("mms.breathing cells={} entropy={:.3e} energy={:.3e}", cells, entropy, energy)
    return entropy, energy


def shell_mode_error(params: ShellParams, amplitude: float = 0.1, mode: int = 1) -> float:
    """Distance of one shell window from the exact modal propagator, lagged traces zero."""
    if not 0 < mode <= params.modes:
        raise ValidationError("excited mode must lie in 1..modes", [mode])
    w_hat = np.zeros(params.modes + 1, dtype=complex)
    theta_hat = np.zeros_like(w_hat)
    w_hat[mode] = amplitude
    theta_hat[mode] = 0.5 * amplitude
    state = ShellState(w_hat, np.zeros_like(w_hat), theta_hat)
    n_gamma = 4 * (params.modes + 1)
    step = advance_window(state, np.zeros(n_gamma), np.zeros(n_gamma), params)

    xi = (2.0 * np.pi * mode) ** 2
    rate = params.delta / params.dt
    damping = params.alpha1 * xi + (params.delta * xi if params.boundary_damping else 0.0)
    coupling = 1.0 if params.thermal_coupling else 0.0
    inertia = 1.0 - params.delta + params.alpha2 * xi
    generator = np.array(
        [
            [0.0, 1.0, 0.0],
            [-params.stiffness * xi**2 / inertia, -(damping + rate) / inertia, coupling * xi / inertia],
            [0.0, -coupling * xi / (1.0 - params.delta), -(xi + rate) / (1.0 - params.delta)],
        ]
    )
    exact = linalg.expm(params.dt * generator) @ np.array([w_hat[mode], 0.0, theta_hat[mode]])
    computed = np.array([step.state.w_hat[mode], step.state.v_hat[mode], step.state.theta_hat[mode]])
    return float(np.max(np.abs(computed - exact)))


def breathing_case(amplitude: float = 0.1, shell: ShellParams | None = None) -> ManufacturedCase:
    mode = BreathingMode(amplitude=amplitude)
    shell = shell or ShellParams(modes=4)

    def identity(level: int) -> tuple[float, float]:
        return breathing_weak_residuals(mode, BASE_BREATHING_CELLS * level)

    def residuals(level: int) -> dict[str, float]:
        entropy, energy = identity(level)
        params = ShellParams(
            alpha1=shell.alpha1,
            alpha2=shell.alpha2,
            delta=shell.delta,
            dt=shell.dt,
            modes=shell.modes,
            substeps=BASE_SUBSTEPS * level,
            stiffness=shell.stiffness,
            thermal_coupling=shell.thermal_coupling,
            boundary_damping=shell.boundary_damping,
        )
        return {"shell": shell_mode_error(params, amplitude), "entropy": abs(entropy), "energy": abs(energy)}

    return ManufacturedCase(
        name="C",
        description="breathing disk coupled to a uniform shell displacement",
        equations=("shell", "entropy", "energy"),
        expected_orders={"shell": 2.0, "entropy": 2.0, "energy": 2.0},
        residuals=residuals,
        identity=identity,
    )


def builtin_cases() -> list[ManufacturedCase]:
    return [heat_diffusion_case(), swirl_case(), breathing_case()]


def find_case(name: str, cases: Sequence[ManufacturedCase]) -> ManufacturedCase:
    for case in reversed(cases):
        if case.name == name:
            return case
    raise ValidationError(f"unknown manufactured case {name!r}", sorted({case.name for case in cases}))


# ---------------------------------------------------------------------- studies


@dataclass(frozen=True)
class ConvergenceReport:
    case: str
    levels: tuple[int, ...]
    residuals: dict[str, tuple[float, ...]]
    orders: dict[str, float]

    def rows(self) -> list[dict[str, str | int | float]]:
        rows: list[dict[str, str | int | float]] = []
        for equation, values in self.residuals.items():
            for level, value in zip(self.levels, values, strict=True):
                rows.append(
                    {
                        "case": self.case,
                        "equation": equation,
                        "level": level,
                        "residual": value,
                        "order": self.orders[equation],
                    }
                )
        return rows


def observed_order(levels: Sequence[int], residuals: Sequence[float]) -> float:
    """Negative log-log slope of residual against refinement; NaN once a residual vanishes."""
    x = np.asarray(levels, dtype=float)
    y = np.asarray(residuals, dtype=float)
    if np.any(y <= 0.0) or np.any(~np.isfinite(y)):
        return float("nan")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(-slope)


def residual_convergence(case: ManufacturedCase, resolutions: Sequence[int], threads: int = 1) -> ConvergenceReport:
    """Residuals at each refinement level and the observed order per equation."""
    levels = tuple(int(level) for level in resolutions)
    if len(levels) < 2:
        raise ValidationError("a convergence study needs at least two resolutions", list(levels))
    if any(level < 1 for level in levels) or len(set(levels)) != len(levels):
        raise ValidationError("resolutions must be distinct positive refinement factors", list(levels))
    with ThreadPoolExecutor(max_workers=max(1, min(threads, len(levels))), thread_name_prefix="fsiheat-mms") as pool:
        results = list(pool.map(case.residuals, levels))
    residuals = {equation: tuple(result[equation] for result in results) for equation in case.equations}
    orders = {equation: observed_order(levels, values) for equation, values in residuals.items()}
    logger.info("mms.done case={} levels={} orders={}", case.name, levels, orders)
    return ConvergenceReport(case=case.name, levels=levels, residuals=residuals, orders=orders)


def coupled_identity_check(case: ManufacturedCase, resolution: int = 2) -> tuple[float, float]:
    """Signed (entropy, energy) weak residuals at one level; regular solutions drive them to 0 under refinement."""
    if case.identity is None:
        raise ValidationError(
            f"case {case.name} has no coupled shell, so the coupled balances do not apply", [case.name]
        )
    if resolution < 1:
        raise ValidationError("resolution must be a positive refinement factor", [resolution])
    return case.identity(resolution)
