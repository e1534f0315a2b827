"""Thermoelastic shell on Γ = ℝ/ℤ: Fourier–Galerkin modes advanced by the implicit midpoint rule.

Per mode m with ξ = (2πm)² the penalized shell reads

    (1 − δ + α₂ξ) v̇ + δ(v − T v_f)/Δt + s ξ² w − c ξ θ + α₁ ξ v = 0,   ẇ = v,
    (1 − δ) θ̇ + δ(θ − T τ)/Δt + ξ θ + c ξ v = 0,

where T v_f and T τ are the lagged fluid traces, s the bending stiffness and
c ∈ {0, 1} switches the thermal coupling.  The midpoint rule turns the energy
balance of this system into an identity, which `ShellStep` itemizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fsiheat.errors import SolverError, ValidationError
from fsiheat.geometry import DisplacementSample
from fsiheat.types import ComplexArray, FloatArray


@dataclass(frozen=True)
class ShellParams:
    alpha1: float = 0.1
    alpha2: float = 0.01
    delta: float = 0.1
    dt: float = 1.0 / 32.0
    modes: int = 32
    substeps: int = 8
    stiffness: float = 1.0
    thermal_coupling: bool = True
    boundary_damping: bool = False

    def __post_init__(self) -> None:
        if self.alpha1 < 0.0 or self.alpha2 < 0.0:
            raise ValidationError("shell coefficients must be non-negative", [self.alpha1, self.alpha2])
        if self.alpha1 + self.alpha2 <= 0.0 and not self.boundary_damping:
            raise ValidationError("the shell needs α₁ + α₂ > 0 unless the δ-damped variant is enabled", [0.0])
        if not 0.0 < self.delta < 1.0 or self.dt <= 0.0:
            raise ValidationError("penalty weight must lie in (0, 1) and Δt > 0", [self.delta, self.dt])
        if self.modes < 1 or self.substeps < 1 or self.stiffness <= 0.0:
            raise ValidationError("modes, substeps and stiffness must be positive", [self.modes, self.substeps])

    @property
    def xi(self) -> FloatArray:
        return (2.0 * np.pi * np.arange(self.modes + 1)) ** 2

    @property
    def parseval_weights(self) -> FloatArray:
        weights = np.full(self.modes + 1, 2.0)
        weights[0] = 1.0
        return weights

    @property
    def substep(self) -> float:
        return self.dt / self.substeps

    @property
    def viscous_rate(self) -> FloatArray:
        """Coefficient of |v|² in the viscous dissipation per mode."""
        rate = self.alpha1 * self.xi
        if self.boundary_damping:
            rate = rate + self.delta * self.xi
        return rate


def to_modes(samples: FloatArray, modes: int) -> ComplexArray:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[-1]
    if modes > n // 2 - 1:
        raise ValidationError(f"{modes} modes need at least {2 * modes + 2} Γ-nodes", [n])
    return np.fft.rfft(samples, axis=-1)[..., : modes + 1] / n


def to_samples(coefficients: ComplexArray, n: int) -> FloatArray:
    coefficients = np.asarray(coefficients)
    full = np.zeros((*coefficients.shape[:-1], n // 2 + 1), dtype=complex)
    full[..., : coefficients.shape[-1]] = coefficients * n
    return np.fft.irfft(full, n=n, axis=-1)


@dataclass(frozen=True, eq=False)
class ShellState:
    w_hat: ComplexArray
    v_hat: ComplexArray
    theta_hat: ComplexArray

    def __post_init__(self) -> None:
        shapes = {np.shape(self.w_hat), np.shape(self.v_hat), np.shape(self.theta_hat)}
        if len(shapes) != 1:
            raise ValidationError("shell mode arrays must share one length", sorted(shapes))

    @classmethod
    def zeros(cls, modes: int) -> ShellState:
        z = np.zeros(modes + 1, dtype=complex)
        return cls(z, z.copy(), z.copy())

    @classmethod
    def from_samples(cls, w: FloatArray, v: FloatArray, theta: FloatArray, modes: int) -> ShellState:
        return cls(to_modes(w, modes), to_modes(v, modes), to_modes(theta, modes))

    @property
    def modes(self) -> int:
        return int(np.size(self.w_hat)) - 1

    def samples(self, n: int) -> tuple[FloatArray, FloatArray, FloatArray]:
        return to_samples(self.w_hat, n), to_samples(self.v_hat, n), to_samples(self.theta_hat, n)

    def displacement(self, n: int) -> DisplacementSample:
        w, v, _ = self.samples(n)
        return DisplacementSample(w, rates=v)

    def as_vector(self) -> ComplexArray:
        return np.stack([self.w_hat, self.v_hat, self.theta_hat], axis=-1)

    @classmethod
    def from_vector(cls, vector: ComplexArray) -> ShellState:
        return cls(vector[:, 0].copy(), vector[:, 1].copy(), vector[:, 2].copy())


@dataclass(frozen=True)
class ShellEnergy:
    kinetic: float
    bending: float
    rotational: float
    thermal: float

    @property
    def total(self) -> float:
        return self.kinetic + self.bending + self.rotational + self.thermal


def shell_energy(state: ShellState, params: ShellParams) -> ShellEnergy:
    """Parseval sums of the four shell energies."""
    weights = params.parseval_weights
    xi = params.xi
    v2 = weights * np.abs(state.v_hat) ** 2
    return ShellEnergy(
        kinetic=float(0.5 * (1.0 - params.delta) * np.sum(v2)),
        bending=float(0.5 * params.stiffness * np.sum(weights * xi**2 * np.abs(state.w_hat) ** 2)),
        rotational=float(0.5 * params.alpha2 * np.sum(xi * v2)),
        thermal=float(0.5 * (1.0 - params.delta) * np.sum(weights * np.abs(state.theta_hat) ** 2)),
    )


@dataclass(frozen=True, eq=False)
class ShellStep:
    """End state of one window plus every term of its energy identity."""

    state: ShellState
    energy_before: ShellEnergy
    energy_after: ShellEnergy
    dissipation_visc: float
    dissipation_heat: float
    exchange_velocity: float
    exchange_temperature: float
    defect_velocity: float
    defect_temperature: float
    velocity_midpoints: FloatArray
    theta_midpoints: FloatArray

    @property
    def slack(self) -> float:
        return verify_ssp_energy(
            self.energy_before.total,
            self.energy_after.total,
            self.dissipation_visc + self.dissipation_heat,
            self.exchange_velocity + self.exchange_temperature,
        )


def _step_operators(params: ShellParams) -> tuple[FloatArray, FloatArray]:
    xi = params.xi
    k = xi.size
    rate = params.delta / params.dt
    coupling = 1.0 if params.thermal_coupling else 0.0
    mass = np.zeros((k, 3, 3))
    mass[:, 0, 0] = 1.0
    mass[:, 1, 1] = 1.0 - params.delta + params.alpha2 * xi
    mass[:, 2, 2] = 1.0 - params.delta
    system = np.zeros((k, 3, 3))
    system[:, 0, 1] = 1.0
    system[:, 1, 0] = -params.stiffness * xi**2
    system[:, 1, 1] = -(params.viscous_rate + rate)
    system[:, 1, 2] = coupling * xi
    system[:, 2, 1] = -coupling * xi
    system[:, 2, 2] = -xi - rate
    h = params.substep
    lhs = mass - 0.5 * h * system
    rhs = mass + 0.5 * h * system
    if np.any(np.abs(np.linalg.det(lhs)) < 1e-300):
        raise SolverError("singular shell mode matrix")
    propagator = np.linalg.solve(lhs, rhs)
    forcing = np.linalg.solve(lhs, np.broadcast_to(np.eye(3), (k, 3, 3)))
    return propagator, forcing


def advance_window(
    state: ShellState,
    lagged_v: FloatArray,
    lagged_tau: FloatArray,
    params: ShellParams,
) -> ShellStep:
    """Advance one Δt window with the lagged fluid traces held constant."""
    lagged_v = np.asarray(lagged_v, dtype=float)
    lagged_tau = np.asarray(lagged_tau, dtype=float)
    if lagged_v.shape != lagged_tau.shape or lagged_v.ndim != 1:
        raise ValidationError("lagged traces must share one Γ grid", [lagged_v.shape, lagged_tau.shape])
    if state.modes != params.modes:
        raise ValidationError("shell state and parameters disagree on the mode count", [state.modes, params.modes])
    n_gamma = lagged_v.size
    rate = params.delta / params.dt
    h = params.substep
    weights = params.parseval_weights
    xi = params.xi

    v_star = to_modes(lagged_v, params.modes)
    tau_star = to_modes(lagged_tau, params.modes)
    source = np.zeros((params.modes + 1, 3), dtype=complex)
    source[:, 1] = rate * v_star
    source[:, 2] = rate * tau_star

    propagator, forcing = _step_operators(params)
    kick = h * np.einsum("kij,kj->ki", forcing, source)

    y = state.as_vector()
    visc = heat = ex_v = ex_t = def_v = def_t = 0.0
    v_mid = np.empty((params.substeps, params.modes + 1), dtype=complex)
    t_mid = np.empty_like(v_mid)
    for i in range(params.substeps):
        y_next = np.einsum("kij,kj->ki", propagator, y) + kick
        mid = 0.5 * (y + y_next)
        vm, tm = mid[:, 1], mid[:, 2]
        visc += h * float(np.sum(weights * params.viscous_rate * np.abs(vm) ** 2))
        heat += h * float(np.sum(weights * xi * np.abs(tm) ** 2))
        ex_v += h * rate * float(np.sum(weights * np.real(np.conj(vm) * (vm - v_star))))
        ex_t += h * rate * float(np.sum(weights * np.real(np.conj(tm) * (tm - tau_star))))
        def_v += 0.5 * h * rate * float(np.sum(weights * np.abs(vm - v_star) ** 2))
        def_t += 0.5 * h * rate * float(np.sum(weights * np.abs(tm - tau_star) ** 2))
        v_mid[i], t_mid[i] = vm, tm
        y = y_next

    end = ShellState.from_vector(y)
    return ShellStep(
        state=end,
        energy_before=shell_energy(state, params),
        energy_after=shell_energy(end, params),
        dissipation_visc=visc,
        dissipation_heat=heat,
        exchange_velocity=ex_v,
        exchange_temperature=ex_t,
        defect_velocity=def_v,
        defect_temperature=def_t,
        velocity_midpoints=to_samples(v_mid, n_gamma),
        theta_midpoints=to_samples(t_mid, n_gamma),
    )


def ssp_advance(state: ShellState, lagged_v: FloatArray, lagged_tau: FloatArray, params: ShellParams) -> ShellState:
    return advance_window(state, lagged_v, lagged_tau, params).state


def verify_ssp_energy(before: float, after: float, dissipation: float, penalties: float) -> float:
    """Signed slack of the shell energy balance; negative beyond tolerance means energy was created."""
    return before - after - dissipation - penalties
