"""Finite-volume fluid sub-problem on the extended box.

One window of length Δt is split into substeps, each of which runs

1. Rusanov transport of (ρ, m, E) with the extended pressure p_{η,δ}; mass and
   energy are dissipated at the advective speed, momentum at the signal speed,
2. a backward-Euler viscous step carrying the interface velocity penalty,
3. a backward-Euler heat step carrying conduction and the temperature penalty,
4. the radiation sink λϑ⁵, solved cell by cell.

Steps 2-4 update the internal energy so that the fluid energy changes by
exactly the exchanged penalty work and the radiated energy.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from loguru import logger
from scipy import sparse as sp
from scipy.sparse import linalg as spla

from fsiheat.constitutive import TransportModel
from fsiheat.errors import SolverError, ValidationError
from fsiheat.extension import ApproxParams, CoefficientFields, ExtendedGas
from fsiheat.geometry import CellGrid
from fsiheat.interface import InterfaceStencil
from fsiheat.structure import ShellStep
from fsiheat.types import FloatArray

_POSITIVITY_CFL = 0.5
_NEWTON_ITERATIONS = 80


@dataclass(frozen=True)
class FluidParams:
    cfl: float = 0.4
    kernel_radius: int = 1
    theta_floor: float = 1e-8
    max_substeps: int = 4096
    cg_tol: float = 1e-10
    picard: int = 2
    vacuum: float = 1e-12
    # relative to the largest density; momentum is dropped below it
    dilute: float = 1e-6
    sound_density_floor: float = 1e-2

    def __post_init__(self) -> None:
        if not 0.0 < self.cfl <= _POSITIVITY_CFL:
            raise ValidationError(f"CFL number must lie in (0, {_POSITIVITY_CFL}]", [self.cfl])
        if self.picard < 1 or self.max_substeps < 1:
            raise ValidationError("picard and max_substeps must be positive", [self.picard, self.max_substeps])
        if not 0.0 <= self.dilute < 1.0:
            raise ValidationError("dilute fraction must lie in [0, 1)", [self.dilute])


@dataclass(frozen=True, eq=False)
class FluidState:
    rho: FloatArray
    momentum: FloatArray
    theta: FloatArray

    def __post_init__(self) -> None:
        if self.momentum.shape != (*self.rho.shape, 2) or self.theta.shape != self.rho.shape:
            raise ValidationError("fluid fields must share the N×N grid", [self.rho.shape, self.momentum.shape])

    def velocity(self, vacuum: float = 1e-12) -> FloatArray:
        occupied = self.rho > vacuum
        safe = np.where(occupied, self.rho, 1.0)
        return np.where(occupied[..., None], self.momentum / safe[..., None], 0.0)


@dataclass(frozen=True)
class FluidEnergy:
    kinetic: float
    internal: float
    artificial: float

    @property
    def total(self) -> float:
        return self.kinetic + self.internal + self.artificial


@dataclass
class FluidStep:
    """Window accumulators of the fluid solver."""

    state: FluidState
    substeps: int = 0
    radiation: float = 0.0
    radiation_exterior: float = 0.0
    viscous: float = 0.0
    viscous_exterior: float = 0.0
    exchange_velocity: float = 0.0
    exchange_temperature: float = 0.0
    defect_velocity: float = 0.0
    defect_temperature: float = 0.0
    penalization_defect: float = 0.0
    entropy_production: float = 0.0
    min_entropy_integrand: float = np.inf
    clamp_events: int = 0
    clamp_energy: float = 0.0
    limiter_fallbacks: int = 0
    final_velocity_trace: FloatArray = field(default_factory=lambda: np.zeros((0, 2)))
    final_theta_trace: FloatArray = field(default_factory=lambda: np.zeros(0))
    mean_velocity_trace: FloatArray = field(default_factory=lambda: np.zeros((0, 2)))
    mean_theta_trace: FloatArray = field(default_factory=lambda: np.zeros(0))


class _CflViolationError(Exception):
    pass


def _coo(rows: FloatArray, cols: FloatArray, vals: FloatArray, shape: tuple[int, int]) -> sp.csr_matrix:
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _corner_stencils(n: int, h: float) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Cell-to-corner difference, average (odd wall ghosts) and adjacency matrices, shape (n+1, n)."""
    k = np.arange(1, n)
    rows = np.concatenate([k, k])
    cols = np.concatenate([k, k - 1])
    diff_vals = np.concatenate([np.ones(n - 1), -np.ones(n - 1)]) / h
    avg_vals = np.full(2 * (n - 1), 0.5)
    diff = _coo(
        np.concatenate([rows, [0, n]]),
        np.concatenate([cols, [0, n - 1]]),
        np.concatenate([diff_vals, [2.0 / h, -2.0 / h]]),
        (n + 1, n),
    )
    average = _coo(rows, cols, avg_vals, (n + 1, n))
    adjacency = _coo(
        np.concatenate([rows, [0, n]]), np.concatenate([cols, [0, n - 1]]), np.ones(2 * (n - 1) + 2), (n + 1, n)
    )
    return diff, average, adjacency


def _face_differences(n: int) -> sp.csr_matrix:
    k = np.arange(n - 1)
    values = np.concatenate([np.ones(n - 1), -np.ones(n - 1)])
    return _coo(np.concatenate([k, k]), np.concatenate([k + 1, k]), values, (n - 1, n))


def solve_spd(matrix: sp.csr_matrix, rhs: FloatArray, x0: FloatArray, tol: float, what: str) -> FloatArray:
    """Jacobi-preconditioned conjugate gradients."""
    diagonal = matrix.diagonal()
    preconditioner = spla.LinearOperator(matrix.shape, matvec=lambda v: v / diagonal, dtype=float)
    solution, info = spla.cg(matrix, rhs, x0=x0, rtol=tol, atol=0.0, M=preconditioner, maxiter=20 * matrix.shape[0])
    if info != 0:
        raise SolverError(f"{what} did not converge (info={info})")
    return np.asarray(solution)


@dataclass(frozen=True)
class FluidSolver:
    grid: CellGrid
    gas: ExtendedGas
    transport: TransportModel
    params: ApproxParams
    settings: FluidParams = field(default_factory=FluidParams)

    def __post_init__(self) -> None:
        if not self.gas.gas.is_prototype:
            raise ValidationError("the fluid solver runs the prototype pressure law only", ["molecular_law"])

    # ------------------------------------------------------------------ operators

    @cached_property
    def _operators(self) -> dict[str, sp.csr_matrix]:
        n, h = self.grid.n, self.grid.h
        diff, average, adjacency = _corner_stencils(n, h)
        counts = np.asarray(adjacency.sum(axis=1)).ravel()
        spread_1d = sp.diags(1.0 / counts) @ adjacency
        faces = _face_differences(n)
        eye = sp.identity(n, format="csr")
        corner_counts = np.kron(counts, counts)
        return {
            "dx": sp.kron(diff, average, format="csr"),
            "dy": sp.kron(average, diff, format="csr"),
            "corner_mean": sp.kron(spread_1d, spread_1d, format="csr"),
            "corner_to_cell": (sp.kron(adjacency, adjacency).T @ sp.diags(1.0 / corner_counts)).tocsr(),
            "gx": sp.kron(faces, eye, format="csr"),
            "gy": sp.kron(eye, faces, format="csr"),
        }

    # ------------------------------------------------------------------ thermodynamics

    def internal_energy(self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray) -> FloatArray:
        return self.gas.energy_density(rho, theta, chi_eta)

    def kinetic_density(self, rho: FloatArray, momentum: FloatArray) -> FloatArray:
        occupied = rho > self.settings.vacuum
        safe = np.where(occupied, rho, 1.0)
        return np.where(occupied, 0.5 * np.sum(momentum**2, axis=-1) / safe, 0.0)

    def total_energy_density(self, state: FluidState, chi_eta: FloatArray) -> FloatArray:
        return (
            self.kinetic_density(state.rho, state.momentum)
            + self.internal_energy(state.rho, state.theta, chi_eta)
            + self.gas.artificial_energy(state.rho)
        )

    def recover_temperature(
        self, rho: FloatArray, rho_e: FloatArray, chi_eta: FloatArray
    ) -> tuple[FloatArray, FloatArray]:
        """Invert ρe_η(ρ, ·) by Newton from an upper bound; returns ϑ and the clamp deficit density."""
        gas = self.gas.gas
        floor = self.settings.theta_floor
        cv_rho = gas.cv * rho
        rad = chi_eta * gas.a
        cold = gas.c1 * np.maximum(rho, 0.0) ** gas.gamma / (gas.gamma - 1.0)
        target = rho_e - cold
        floor_energy = cv_rho * floor + rad * floor**4
        low = target <= floor_energy
        positive = np.maximum(target, floor_energy)
        bound = (positive / rad) ** 0.25
        bound = np.where(cv_rho > 0.0, np.minimum(bound, positive / np.where(cv_rho > 0.0, cv_rho, 1.0)), bound)
        theta = np.maximum(bound, floor)
        for _ in range(_NEWTON_ITERATIONS):
            residual = cv_rho * theta + rad * theta**4 - positive
            step = residual / (cv_rho + 4.0 * rad * theta**3)
            theta = np.maximum(theta - step, floor)
            if np.max(np.abs(step) / theta) < 1e-15:
                break
        theta = np.where(low, floor, theta)
        deficit = np.where(low, floor_energy - target, 0.0)
        return theta, deficit

    def sound_speed(self, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray) -> FloatArray:
        dp_rho = self.gas.dp_drho(rho, theta)
        dp_theta = self.gas.dp_dtheta(rho, theta, chi_eta)
        capacity = self.gas.heat_capacity(rho, theta, chi_eta)
        rho_eff = np.maximum(rho, self.settings.sound_density_floor)
        return np.sqrt(dp_rho + theta * dp_theta**2 / (rho_eff * capacity))

    def dilute_cells(self, rho: FloatArray) -> FloatArray:
        """Cells too thin to carry momentum."""
        top = float(np.max(rho)) if rho.size else 0.0
        return rho < max(self.settings.vacuum, self.settings.dilute * top)

    def limit_velocity(self, rho: FloatArray, u: FloatArray) -> FloatArray:
        """Cap the speed of cells below the sound density floor at the bulk speed."""
        thin = rho < self.settings.sound_density_floor
        if not np.any(~thin):
            return u
        speed = np.linalg.norm(u, axis=-1)
        bulk = float(np.max(speed[~thin]))
        scale = np.where(thin & (speed > bulk), bulk / np.maximum(speed, 1e-300), 1.0)
        return u * scale[..., None]

    def max_signal_speed(self, state: FluidState, chi_eta: FloatArray) -> float:
        speed = np.linalg.norm(state.velocity(self.settings.vacuum), axis=-1)
        speed = np.where(self.dilute_cells(state.rho), 0.0, speed)
        return float(np.max(speed + self.sound_speed(state.rho, state.theta, chi_eta)))

    # ------------------------------------------------------------------ transport

    def _rusanov_rhs(self, conserved: FloatArray, theta: FloatArray, chi_eta: FloatArray) -> FloatArray:
        rho, m1, m2, energy = conserved
        occupied = rho > self.settings.vacuum
        safe = np.where(occupied, rho, 1.0)
        u1 = np.where(occupied, m1 / safe, 0.0)
        u2 = np.where(occupied, m2 / safe, 0.0)
        pressure = self.gas.pressure(np.maximum(rho, 0.0), theta, chi_eta)
        sound = self.sound_speed(np.maximum(rho, 0.0), theta, chi_eta)
        h = self.grid.h

        def face_flux(axis: int) -> FloatArray:
            normal = u1 if axis == 0 else u2
            sign = np.array([1.0, -1.0, 1.0, 1.0]) if axis == 0 else np.array([1.0, 1.0, -1.0, 1.0])
            state = np.stack([rho, m1, m2, energy])
            flux = np.stack([rho * normal, m1 * normal, m2 * normal, (energy + pressure) * normal])
            flux[1 + axis] += pressure
            drift = np.abs(normal)
            speed = drift + sound

            def pad(values: FloatArray, mirror: FloatArray | None) -> FloatArray:
                first = np.take(values, [0], axis=values.ndim - 2 + axis)
                last = np.take(values, [-1], axis=values.ndim - 2 + axis)
                if mirror is not None:
                    first = first * mirror[:, None, None]
                    last = last * mirror[:, None, None]
                return np.concatenate([first, values, last], axis=values.ndim - 2 + axis)

            # mirrored ghosts: normal momentum flips, so mass and energy fluxes vanish at walls
            ghost_flux_sign = -sign
            ghost_flux_sign[1 + axis] = 1.0
            padded_state = pad(state, sign)
            padded_flux = pad(flux, ghost_flux_sign)
            padded_speed = pad(speed[None], None)[0]
            padded_drift = pad(drift[None], None)[0]
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[1 + axis] = slice(None, -1)
            hi[1 + axis] = slice(1, None)
            lo_t, hi_t = tuple(lo), tuple(hi)
            alpha = np.maximum(padded_speed[lo_t[1:]], padded_speed[hi_t[1:]])
            # mass and energy see only the advective speed: no flux across a face where u vanishes
            advective = np.maximum(padded_drift[lo_t[1:]], padded_drift[hi_t[1:]])
            dissipation = np.stack([advective, alpha, alpha, advective])
            jump = padded_state[hi_t] - padded_state[lo_t]
            return 0.5 * (padded_flux[lo_t] + padded_flux[hi_t]) - 0.5 * dissipation * jump

        fx = face_flux(0)
        fy = face_flux(1)
        return -(fx[:, 1:, :] - fx[:, :-1, :]) / h - (fy[:, :, 1:] - fy[:, :, :-1]) / h

    def flux_divergence(self, state: FluidState, chi_eta: FloatArray) -> FloatArray:
        """Rusanov right-hand side of (ρ, m₁, m₂, E), stacked along the first axis."""
        return self._rusanov_rhs(self._conserved(state, chi_eta), state.theta, chi_eta)

    def _conserved(self, state: FluidState, chi_eta: FloatArray) -> FloatArray:
        return np.stack(
            [state.rho, state.momentum[..., 0], state.momentum[..., 1], self.total_energy_density(state, chi_eta)]
        )

    def _temperature_from_conserved(
        self, conserved: FloatArray, chi_eta: FloatArray
    ) -> tuple[FloatArray, FloatArray, FloatArray]:
        rho, m1, m2, energy = conserved
        momentum = np.stack([m1, m2], axis=-1)
        rho_e = energy - self.kinetic_density(rho, momentum) - self.gas.artificial_energy(np.maximum(rho, 0.0))
        theta, deficit = self.recover_temperature(np.maximum(rho, 0.0), rho_e, chi_eta)
        return theta, deficit, momentum

    def transport_step(
        self, state: FluidState, chi_eta: FloatArray, dt: float, step: FluidStep
    ) -> tuple[FluidState, FloatArray]:
        """Explicit midpoint Rusanov update; returns the new state and its internal energy density."""
        u0 = self._conserved(state, chi_eta)
        rhs0 = self._rusanov_rhs(u0, state.theta, chi_eta)
        half = u0 + 0.5 * dt * rhs0
        updated = None
        if np.min(half[0]) >= 0.0:
            theta_half, _, _ = self._temperature_from_conserved(half, chi_eta)
            candidate = u0 + dt * self._rusanov_rhs(half, theta_half, chi_eta)
            if np.min(candidate[0]) >= 0.0:
                updated = candidate
        if updated is None:
            step.limiter_fallbacks += 1
            logger.debug("fluid.limiter_fallback substep={}", step.substeps)
            updated = u0 + dt * rhs0
            if np.min(updated[0]) < 0.0:
                raise SolverError(f"negative density {float(np.min(updated[0])):.3e} after first-order fallback")
        dilute = self.dilute_cells(updated[0])
        updated[1][dilute] = 0.0
        updated[2][dilute] = 0.0
        theta, deficit, momentum = self._temperature_from_conserved(updated, chi_eta)
        self._record_clamps(deficit, step)
        rho = updated[0]
        rho_e = self.internal_energy(rho, theta, chi_eta)
        return FluidState(rho=rho, momentum=momentum, theta=theta), rho_e

    def _record_clamps(self, deficit: FloatArray, step: FluidStep) -> None:
        events = int(np.count_nonzero(deficit > 0.0))
        if events:
            step.clamp_events += events
            step.clamp_energy += self.grid.integrate(deficit)
            logger.debug("fluid.theta_clamp cells={} energy={:.3e}", events, self.grid.integrate(deficit))

    # ------------------------------------------------------------------ viscosity and velocity penalty

    def _strain_operator(
        self, theta: FloatArray, coeffs: CoefficientFields
    ) -> tuple[sp.csr_matrix, tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix], tuple[FloatArray, ...]]:
        ops = self._operators
        n2 = self.grid.n**2
        mu_cell = (coeffs.f_omega * self.transport.mu(theta)).ravel()
        zeta_cell = (coeffs.f_omega * self.transport.zeta(theta)).ravel()
        mu = ops["corner_mean"] @ mu_cell
        lam = ops["corner_mean"] @ (zeta_cell - 2.0 / 3.0 * mu_cell)
        zero = sp.csr_matrix((ops["dx"].shape[0], n2))
        ga = sp.hstack([ops["dx"], zero], format="csr")
        gb = sp.hstack([zero, ops["dy"]], format="csr")
        gs = sp.hstack([ops["dy"], ops["dx"]], format="csr")
        diag_normal = sp.diags(2.0 * mu + lam)
        diag_lam = sp.diags(lam)
        stiffness = (
            ga.T @ diag_normal @ ga
            + gb.T @ diag_normal @ gb
            + ga.T @ diag_lam @ gb
            + gb.T @ diag_lam @ ga
            + gs.T @ sp.diags(mu) @ gs
        ) * self.grid.cell_area
        return stiffness.tocsr(), (ga, gb, gs), (mu, lam)

    def viscous_step(
        self,
        state: FluidState,
        rho_e: FloatArray,
        coeffs: CoefficientFields,
        stencil: InterfaceStencil,
        shell_velocity: FloatArray,
        dt: float,
        step: FluidStep,
    ) -> tuple[FluidState, FloatArray]:
        n, area = self.grid.n, self.grid.cell_area
        rate = self.params.penalty_rate
        vacuum = self.settings.vacuum
        u_star = state.velocity(vacuum)
        rho_eff = np.maximum(state.rho, vacuum).ravel()
        stiffness, (ga, gb, gs), (mu, lam) = self._strain_operator(state.theta, coeffs)
        gram = stencil.gram()
        inertia = sp.diags(np.concatenate([rho_eff, rho_eff]) * area / dt)
        matrix = (inertia + stiffness + rate * sp.block_diag([gram, gram])).tocsr()
        target = stencil.matrix.T @ (stencil.weights[:, None] * shell_velocity)
        rhs = inertia @ np.concatenate([u_star[..., 0].ravel(), u_star[..., 1].ravel()]) + rate * np.concatenate(
            [target[:, 0], target[:, 1]]
        )
        x0 = np.concatenate([u_star[..., 0].ravel(), u_star[..., 1].ravel()])
        solution = solve_spd(matrix, rhs, x0, self.settings.cg_tol, "viscous solve")
        u = np.stack([solution[: n * n].reshape(n, n), solution[n * n :].reshape(n, n)], axis=-1)
        u = np.where(self.dilute_cells(state.rho)[..., None], 0.0, self.limit_velocity(state.rho, u))
        momentum = state.rho[..., None] * u

        trace = stencil.interpolate(u)
        mismatch = trace - shell_velocity
        exchange = dt * rate * float(np.sum(stencil.weights * np.sum(trace * mismatch, axis=-1)))
        step.exchange_velocity += exchange
        step.defect_velocity += 0.5 * dt * rate * float(np.sum(stencil.weights * np.sum(mismatch**2, axis=-1)))
        weighted = stencil.weights * np.sum(mismatch**2, axis=-1)
        step.penalization_defect += dt * self.params.delta * float(np.sum(weighted))

        a, b, s = ga @ solution, gb @ solution, gs @ solution
        corner = area * (2.0 * mu * (a**2 + b**2) + lam * (a + b) ** 2 + mu * s**2)
        viscous_cells = (self._operators["corner_to_cell"] @ corner).reshape(n, n)
        relaxation = 0.5 * area * state.rho * np.sum((u - u_star) ** 2, axis=-1) / dt
        weights = viscous_cells + relaxation
        kinetic_before = area * float(np.sum(self.kinetic_density(state.rho, state.momentum)))
        kinetic_after = area * float(np.sum(self.kinetic_density(state.rho, momentum)))
        heat = kinetic_before - kinetic_after - exchange
        total_weight = float(np.sum(weights))
        if total_weight > 0.0:
            rho_e = rho_e + heat * weights / (total_weight * area)
        elif abs(heat) > 0.0:
            rho_e = rho_e + heat / (area * rho_e.size)

        dissipated = dt * viscous_cells
        step.viscous += float(np.sum(dissipated))
        step.viscous_exterior += float(np.sum(dissipated[coeffs.exterior]))
        theta, deficit = self.recover_temperature(state.rho, rho_e, coeffs.chi_eta)
        self._record_clamps(deficit, step)
        rho_e = rho_e + deficit
        sigma_visc = viscous_cells / (area * theta)
        step.entropy_production += dt * area * float(np.sum(sigma_visc))
        step.min_entropy_integrand = min(step.min_entropy_integrand, float(np.min(sigma_visc)))
        return FluidState(rho=state.rho, momentum=momentum, theta=theta), rho_e

    # ------------------------------------------------------------------ conduction and temperature penalty

    def conduction_operator(
        self, theta: FloatArray, coeffs: CoefficientFields
    ) -> tuple[sp.csr_matrix, FloatArray, FloatArray]:
        ops = self._operators
        kappa = (coeffs.chi_nu * self.transport.kappa(theta)).ravel()
        gx, gy = ops["gx"], ops["gy"]
        kx = 0.5 * (abs(gx) @ kappa)
        ky = 0.5 * (abs(gy) @ kappa)
        operator = gx.T @ sp.diags(kx) @ gx + gy.T @ sp.diags(ky) @ gy
        return operator.tocsr(), kx, ky

    def heat_step(
        self,
        state: FluidState,
        rho_e: FloatArray,
        coeffs: CoefficientFields,
        stencil: InterfaceStencil,
        shell_theta: FloatArray,
        dt: float,
        step: FluidStep,
    ) -> tuple[FluidState, FloatArray]:
        area = self.grid.cell_area
        rate = self.params.penalty_rate
        floor = self.settings.theta_floor
        theta_old = state.theta
        capacity = self.gas.heat_capacity(state.rho, theta_old, coeffs.chi_eta).ravel()
        conduction, kx, ky = self.conduction_operator(theta_old, coeffs)
        inertia = sp.diags(capacity * area / dt)
        flat_old = theta_old.ravel()
        weighted = stencil.weights
        tau_star = np.maximum(stencil.interpolate(theta_old), floor)
        solution = flat_old
        for sweep in range(self.settings.picard):
            penalty = stencil.matrix.T @ sp.diags(weighted * tau_star) @ stencil.matrix
            matrix = (inertia + conduction + rate * penalty).tocsr()
            rhs = inertia @ flat_old + rate * (stencil.matrix.T @ (weighted * tau_star * shell_theta))
            solution = solve_spd(matrix, rhs, solution, self.settings.cg_tol, "heat solve")
            if sweep < self.settings.picard - 1:
                tau_star = np.maximum(stencil.matrix @ solution, floor)

        increment = (capacity * (solution - flat_old)).reshape(state.rho.shape)
        step.exchange_temperature -= area * float(np.sum(increment))
        tau = stencil.matrix @ solution
        step.defect_temperature += 0.5 * dt * rate * float(np.sum(weighted * (tau - shell_theta) ** 2))
        step.penalization_defect += dt * self.params.delta * float(np.sum(weighted * (tau - shell_theta) ** 2))

        positive = np.maximum(solution, floor)
        gx, gy = self._operators["gx"], self._operators["gy"]
        # κ_f (ϑ_R − ϑ_L)² / (ϑ_L ϑ_R) per face
        log_theta = np.log(positive)
        face_x = kx * (gx @ positive) ** 2 / np.exp(abs(gx) @ log_theta)
        face_y = ky * (gy @ positive) ** 2 / np.exp(abs(gy) @ log_theta)
        conduction_entropy = float(np.sum(face_x) + np.sum(face_y))
        step.entropy_production += dt * conduction_entropy

        rho_e = rho_e + increment
        theta, deficit = self.recover_temperature(state.rho, rho_e, coeffs.chi_eta)
        self._record_clamps(deficit, step)
        rho_e = rho_e + deficit
        return FluidState(rho=state.rho, momentum=state.momentum, theta=theta), rho_e

    # ------------------------------------------------------------------ radiation

    def radiation_step(
        self, state: FluidState, rho_e: FloatArray, coeffs: CoefficientFields, dt: float, step: FluidStep
    ) -> tuple[FluidState, FloatArray]:
        """Backward Euler for ∂t(ρe) = −λϑ⁵, cell by cell."""
        theta = radiation_relaxation(self.gas, state.rho, rho_e, state.theta, coeffs.chi_eta, self.params.lam * dt)
        new_energy = self.internal_energy(state.rho, theta, coeffs.chi_eta)
        removed = self.grid.cell_area * (rho_e - new_energy)
        step.radiation += float(np.sum(removed))
        step.radiation_exterior += float(np.sum(removed[coeffs.exterior]))
        return FluidState(rho=state.rho, momentum=state.momentum, theta=theta), new_energy

    # ------------------------------------------------------------------ window

    def substep_count(self, state: FluidState, coeffs: CoefficientFields, shell_substeps: int) -> int:
        speed = self.max_signal_speed(state, coeffs.chi_eta)
        needed = self.params.dt * speed / (self.settings.cfl * self.grid.h)
        per_shell = max(1, int(np.ceil(needed / shell_substeps - 1e-12)))
        return per_shell * shell_substeps

    def advance_window(
        self,
        state: FluidState,
        coeffs: CoefficientFields,
        stencil: InterfaceStencil,
        shell_velocity: FloatArray,
        shell_theta: FloatArray,
        window: int | None = None,
    ) -> FluidStep:
        """Advance one window against per-shell-substep midpoint data of shape (S, n_Γ)."""
        shell_substeps = shell_velocity.shape[0]
        count = self.substep_count(state, coeffs, shell_substeps)
        while True:
            if count > self.settings.max_substeps:
                raise SolverError(f"CFL refinement exceeded {self.settings.max_substeps} substeps", window=window)
            try:
                return self._run_window(state, coeffs, stencil, shell_velocity, shell_theta, count)
            except _CflViolationError:
                count *= 2
                logger.info("fluid.cfl_refine window={} substeps={}", window, count)

    def _run_window(
        self,
        state: FluidState,
        coeffs: CoefficientFields,
        stencil: InterfaceStencil,
        shell_velocity: FloatArray,
        shell_theta: FloatArray,
        count: int,
    ) -> FluidStep:
        shell_substeps = shell_velocity.shape[0]
        per_shell = count // shell_substeps
        dt = self.params.dt / count
        normals = stencil.reference_normals
        step = FluidStep(state=state)
        velocity_sum = np.zeros((stencil.n_nodes, 2))
        theta_sum = np.zeros(stencil.n_nodes)
        for index in range(count):
            if dt * self.max_signal_speed(state, coeffs.chi_eta) > _POSITIVITY_CFL * self.grid.h:
                raise _CflViolationError
            shell_index = index // per_shell
            target_velocity = shell_velocity[shell_index][:, None] * normals
            state, rho_e = self.transport_step(state, coeffs.chi_eta, dt, step)
            state, rho_e = self.viscous_step(state, rho_e, coeffs, stencil, target_velocity, dt, step)
            state, rho_e = self.heat_step(state, rho_e, coeffs, stencil, shell_theta[shell_index], dt, step)
            state, rho_e = self.radiation_step(state, rho_e, coeffs, dt, step)
            step.substeps += 1
            velocity_trace = stencil.interpolate(state.velocity(self.settings.vacuum))
            theta_trace = stencil.interpolate(state.theta)
            velocity_sum += velocity_trace
            theta_sum += theta_trace
        step.state = state
        step.final_velocity_trace = stencil.interpolate(state.velocity(self.settings.vacuum))
        step.final_theta_trace = stencil.interpolate(state.theta)
        step.mean_velocity_trace = velocity_sum / max(count, 1)
        step.mean_theta_trace = theta_sum / max(count, 1)
        if step.clamp_events or step.limiter_fallbacks:
            logger.warning(
                "fluid.window_events clamps={} clamp_energy={:.3e} fallbacks={}",
                step.clamp_events,
                step.clamp_energy,
                step.limiter_fallbacks,
            )
        return step

    # ------------------------------------------------------------------ ledgers

    def remap(
        self, state: FluidState, old: CoefficientFields, new: CoefficientFields
    ) -> tuple[FluidState, float]:
        """Carry a state onto rebuilt coefficients at fixed ρe; returns it and the clamp energy it cost."""
        if np.array_equal(old.chi_eta, new.chi_eta):
            return state, 0.0
        rho_e = self.internal_energy(state.rho, state.theta, old.chi_eta)
        theta, deficit = self.recover_temperature(state.rho, rho_e, new.chi_eta)
        return FluidState(rho=state.rho, momentum=state.momentum, theta=theta), self.grid.integrate(deficit)

    def fluid_energy(self, state: FluidState, coeffs: CoefficientFields) -> FluidEnergy:
        return FluidEnergy(
            kinetic=self.grid.integrate(self.kinetic_density(state.rho, state.momentum)),
            internal=self.grid.integrate(self.internal_energy(state.rho, state.theta, coeffs.chi_eta)),
            artificial=self.grid.integrate(self.gas.artificial_energy(state.rho)),
        )

    def helmholtz_ledger(
        self, state: FluidState, coeffs: CoefficientFields, theta_bar: float = 1.0, rho_bar: float | None = None
    ) -> float:
        """Relative Helmholtz functional with ρ̄ = total mass / |B| unless given."""
        rho_bar = self.grid.integrate(state.rho) / self.grid.area if rho_bar is None else rho_bar
        return self.grid.integrate(
            self.kinetic_density(state.rho, state.momentum)
            + relative_helmholtz(self.gas, state.rho, state.theta, coeffs.chi_eta, rho_bar, theta_bar)
            + self.gas.artificial_energy(state.rho)
        )

    def mass(self, state: FluidState) -> float:
        return self.grid.integrate(state.rho)


def radiation_relaxation(
    gas: ExtendedGas,
    rho: FloatArray,
    rho_e: FloatArray,
    theta: FloatArray,
    chi_eta: FloatArray,
    sink: float,
) -> FloatArray:
    """Solve ρe_η(ρ, ϑ) + sink·ϑ⁵ = ρe by Newton from the current temperature (an upper bound)."""
    model = gas.gas
    cold = model.c1 * rho**model.gamma / (model.gamma - 1.0)
    cv_rho = model.cv * rho
    rad = chi_eta * model.a
    target = rho_e - cold
    value = np.array(theta, dtype=float)
    for _ in range(_NEWTON_ITERATIONS):
        residual = cv_rho * value + rad * value**4 + sink * value**5 - target
        step = residual / (cv_rho + 4.0 * rad * value**3 + 5.0 * sink * value**4)
        value = np.maximum(value - step, 0.5 * value)
        if np.max(np.abs(step) / value) < 1e-15:
            break
    return value


def relative_helmholtz(
    gas: ExtendedGas, rho: FloatArray, theta: FloatArray, chi_eta: FloatArray, rho_bar: float, theta_bar: float = 1.0
) -> FloatArray:
    """H(ρ, ϑ) − (ρ − ρ̄) ∂_ρH(ρ̄, ϑ̄) − H(ρ̄, ϑ̄) with H = ρ(e_η − ϑ̄ s_η)."""
    model = gas.gas
    if rho_bar <= 0.0:
        raise ValidationError("reference density must be positive", [rho_bar])
    dh_drho = (
        model.gamma * model.c1 * rho_bar ** (model.gamma - 1.0) / (model.gamma - 1.0)
        + model.cv * theta_bar
        - theta_bar * (model.cv * np.log(theta_bar) - model.c2 * (np.log(rho_bar) + 1.0))
    )
    reference = gas.helmholtz(np.asarray(rho_bar), np.asarray(theta_bar), chi_eta, theta_bar)
    return gas.helmholtz(rho, theta, chi_eta, theta_bar) - (rho - rho_bar) * dh_drho - reference


def initial_fluid_state(rho: FloatArray, momentum: FloatArray, theta: FloatArray) -> FluidState:
    return FluidState(
        rho=np.array(rho, dtype=float), momentum=np.array(momentum, dtype=float), theta=np.array(theta, dtype=float)
    )


# ---------------------------------------------------------------------- renormalized continuity


@dataclass(frozen=True)
class SpaceTimeTest:
    """Smooth test function φ(t, x, y) with its time derivative and gradient."""

    value: Callable[[float, FloatArray, FloatArray], FloatArray]
    time_derivative: Callable[[float, FloatArray, FloatArray], FloatArray]
    gradient: Callable[[float, FloatArray, FloatArray], tuple[FloatArray, FloatArray]]


def bump_test(center: tuple[float, float] = (0.0, 0.0), radius: float = 0.8, frequency: float = 1.0) -> SpaceTimeTest:
    """cos(ft)·b(r) with b(r) = (1 − r²/R²)³ inside the disc of radius R."""
    cx, cy = center

    def profile(x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        q = ((x - cx) ** 2 + (y - cy) ** 2) / radius**2
        inside = q < 1.0
        base = np.where(inside, (1.0 - q) ** 3, 0.0)
        slope = np.where(inside, -6.0 * (1.0 - q) ** 2 / radius**2, 0.0)
        return base, slope * (x - cx), slope * (y - cy)

    def value(t: float, x: FloatArray, y: FloatArray) -> FloatArray:
        return np.cos(frequency * t) * profile(x, y)[0]

    def time_derivative(t: float, x: FloatArray, y: FloatArray) -> FloatArray:
        return -frequency * np.sin(frequency * t) * profile(x, y)[0]

    def gradient(t: float, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        _, gx, gy = profile(x, y)
        return np.cos(frequency * t) * gx, np.cos(frequency * t) * gy

    return SpaceTimeTest(value, time_derivative, gradient)


def renormalized_continuity_residual(
    grid: CellGrid,
    times: Sequence[float],
    densities: Sequence[FloatArray],
    velocities: Sequence[FloatArray],
    b: Callable[[FloatArray], FloatArray],
    b_prime: Callable[[FloatArray], FloatArray],
    test: SpaceTimeTest,
) -> float:
    """Weak residual of ∂t b(ρ) + div(b(ρ)u) + (ρb'(ρ) − b(ρ)) div u = 0 against φ.

    Midpoint rule on cells, trapezoid in time, centred differences for div u.
    """
    if len(times) < 2 or not len(times) == len(densities) == len(velocities):
        raise ValidationError("trajectory needs at least two aligned snapshots", [len(times)])
    x, y = grid.mesh

    def integrand(k: int) -> float:
        t, rho, u = times[k], densities[k], velocities[k]
        phi = test.value(t, x, y)
        gx, gy = test.gradient(t, x, y)
        renorm = b(rho)
        div_u = np.gradient(u[..., 0], grid.h, axis=0) + np.gradient(u[..., 1], grid.h, axis=1)
        body = renorm * test.time_derivative(t, x, y) + renorm * (u[..., 0] * gx + u[..., 1] * gy)
        body = body - (rho * b_prime(rho) - renorm) * div_u * phi
        return grid.integrate(body)

    values = np.array([integrand(k) for k in range(len(times))])
    time_integral = float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(np.asarray(times, dtype=float))))
    start = grid.integrate(b(densities[0]) * test.value(times[0], x, y))
    end = grid.integrate(b(densities[-1]) * test.value(times[-1], x, y))
    return end - start - time_integral


def fsp_advance(
    solver: FluidSolver,
    state: FluidState,
    shell: ShellStep,
    coeffs: CoefficientFields,
    stencil: InterfaceStencil,
    window: int | None = None,
) -> FluidState:
    """One window of the fluid sub-problem against the shell outputs of the same window."""
    return solver.advance_window(
        state, coeffs, stencil, shell.velocity_midpoints, shell.theta_midpoints, window=window
    ).state
