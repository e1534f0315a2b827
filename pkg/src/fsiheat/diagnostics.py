"""Runtime checks over states and trajectories: exterior density, the coupled entropy
inequality, the weak energy balance, Korn quotients, the pressure-strip monitor and the penalization defect."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np
from loguru import logger

from fsiheat.constitutive import TransportModel, entropy_production, heat_flux, stress_tensor
from fsiheat.errors import ValidationError
from fsiheat.extension import CoefficientFields, ExtendedGas
from fsiheat.fluid import FluidSolver, FluidState
from fsiheat.geometry import CellGrid, DisplacementSample, ReferenceGeometry
from fsiheat.interface import InterfaceStencil
from fsiheat.trajectory import Trajectory
from fsiheat.types import BoolArray, FloatArray

PairKind = Literal["entropy", "momentum"]
FluidTest = Callable[[float, FloatArray, FloatArray], FloatArray]
GammaTest = Callable[[float, FloatArray], FloatArray]


# ---------------------------------------------------------------------- exterior density


def exterior_mass(state: FluidState, coeffs: CoefficientFields, grid: CellGrid) -> float:
    return grid.integrate(np.where(coeffs.exterior, state.rho, 0.0))


def check_exterior_density(trajectory: Trajectory) -> float:
    """sup over frames of the mass outside Ω^w."""
    if not len(trajectory):
        return 0.0
    return max(exterior_mass(frame.fluid, frame.coefficients, trajectory.grid) for frame in trajectory)


# ---------------------------------------------------------------------- test pairs


def smooth_step(s: FloatArray) -> FloatArray:
    """C² ramp from 0 at s <= 0 to 1 at s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


@dataclass(frozen=True)
class BlendLayers:
    """Distances of the cut-off layers from Γ^w along the normal.

    a¹ = w − inner_outer < a² = w − inner_inner < w < b¹ = w + outer_inner < b² = w + outer_outer.
    """

    inner_outer: float = 0.3
    inner_inner: float = 0.1
    outer_inner: float = 0.1
    outer_outer: float = 0.3

    def __post_init__(self) -> None:
        if not (0.0 < self.inner_inner < self.inner_outer and 0.0 < self.outer_inner < self.outer_outer):
            raise ValidationError(
                "blend layers must be nested a¹ < a² < w < b¹ < b²",
                [self.inner_outer, self.inner_inner, self.outer_inner, self.outer_outer],
            )

    def cutoff(self, offset: FloatArray) -> FloatArray:
        """1 between a² and b¹, 0 below a¹ and above b², smooth in between."""
        offset = np.asarray(offset, dtype=float)
        inner = smooth_step((offset + self.inner_outer) / (self.inner_outer - self.inner_inner))
        outer = smooth_step((self.outer_outer - offset) / (self.outer_outer - self.outer_inner))
        return np.minimum(inner, outer)

    def require_inside(self, geometry: ReferenceGeometry, w: DisplacementSample) -> None:
        lower = float(np.min(w.values)) - self.inner_outer
        upper = float(np.max(w.values)) + self.outer_outer
        if not (geometry.a < lower and upper < geometry.b):
            raise ValidationError(
                f"blend layers leave the tube ({geometry.a}, {geometry.b})", [f"a1={lower:.3f}", f"b2={upper:.3f}"]
            )


@dataclass(frozen=True)
class WeakTestPair:
    """Bulk test field φ and Γ-field ψ glued so that γφ = ψ (entropy) or ψ n (momentum) on Γ^w."""

    kind: PairKind
    phi: FluidTest
    psi: GammaTest
    geometry: ReferenceGeometry
    layers: BlendLayers

    def blended(self, t: float, points: FloatArray, w: DisplacementSample) -> FloatArray:
        self.layers.require_inside(self.geometry, w)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y, d = self.geometry.tube_coordinates(pts)
        tube = self.geometry.in_tube(d)
        cut = np.where(tube, self.layers.cutoff(d - w.evaluate(y)), 0.0)
        base = np.asarray(self.phi(t, pts[:, 0], pts[:, 1]), dtype=float)
        target = np.asarray(self.psi(t, y), dtype=float)
        if self.kind == "momentum":
            target = target[:, None] * self.geometry.normal(y)
            cut = cut[:, None]
        return base + cut * (target - base)

    def on_grid(self, t: float, grid: CellGrid, w: DisplacementSample) -> FloatArray:
        values = self.blended(t, grid.points, w)
        shape = (grid.n, grid.n) if self.kind == "entropy" else (grid.n, grid.n, 2)
        return values.reshape(shape)

    def gamma_values(self, t: float, w: DisplacementSample) -> FloatArray:
        return np.asarray(self.psi(t, w.nodes), dtype=float)


def build_test_pair(
    phi: FluidTest,
    psi: GammaTest,
    geometry: ReferenceGeometry,
    w: DisplacementSample,
    layers: BlendLayers | None = None,
    kind: PairKind = "entropy",
) -> WeakTestPair:
    """Glue φ to ψ across a cut-off band around Γ^w; the band must fit inside the tube."""
    if kind not in ("entropy", "momentum"):
        raise ValidationError("test pair kind must be 'entropy' or 'momentum'", [kind])
    pair = WeakTestPair(kind=kind, phi=phi, psi=psi, geometry=geometry, layers=layers or BlendLayers())
    pair.layers.require_inside(geometry, w)
    return pair


def trace_mismatch(pair: WeakTestPair, t: float, w: DisplacementSample, stencil: InterfaceStencil) -> float:
    """sup over Γ-nodes of |γφ_blend − ψ (n)| with the trace taken through the stencil."""
    field = pair.on_grid(t, stencil.grid, w)
    trace = stencil.interpolate(field)
    target = pair.gamma_values(t, w)
    if pair.kind == "momentum":
        target = target[:, None] * stencil.reference_normals
    return float(np.max(np.abs(trace - target)))


# ---------------------------------------------------------------------- entropy inequality


def _cell_gradient(field: FloatArray, h: float) -> FloatArray:
    return np.stack([np.gradient(field, h, axis=0), np.gradient(field, h, axis=1)], axis=-1)


def _gamma_derivative(values: FloatArray) -> FloatArray:
    return DisplacementSample(values).node_derivative()


def entropy_inequality_residual(
    trajectory: Trajectory,
    pair: WeakTestPair,
    gas: ExtendedGas,
    transport: TransportModel,
    sink: float | None = None,
    source: FluidTest | None = None,
) -> float:
    """LHS − RHS of the coupled weak entropy inequality over the recorded frames.

    The radiation sink λϑ⁴φ (λ from `gas.params` unless given) and an optional heat
    source f enter as (f/ϑ − λϑ⁴)φ. A solver run gives a residual ≤ 0 up to
    quadrature error. Terminal terms are kept so the test pair need not vanish at the final time.
    Space integrals use the midpoint rule on cells inside Ω^w, Γ integrals the
    node rule, time integrals the trapezoid rule over frames.
    """
    if pair.kind != "entropy":
        raise ValidationError("the entropy inequality takes an entropy test pair", [pair.kind])
    frames = trajectory.frames
    if len(frames) < 2:
        raise ValidationError("the entropy residual needs at least two frames", [len(frames)])
    lam = gas.params.lam if sink is None else sink
    grid = trajectory.grid
    times = trajectory.times
    phis = np.stack([pair.on_grid(f.time, grid, f.displacement) for f in frames])
    psis = np.stack([pair.gamma_values(f.time, f.displacement) for f in frames])
    dphi_dt = np.gradient(phis, times, axis=0)
    dpsi_dt = np.gradient(psis, times, axis=0)

    bulk = np.empty(len(frames))
    shell = np.empty(len(frames))
    bulk_density = np.empty(len(frames))
    shell_density = np.empty(len(frames))
    for index, frame in enumerate(frames):
        state, coeffs = frame.fluid, frame.coefficients
        interior = coeffs.interior
        rho_s = gas.entropy_density(state.rho, state.theta, coeffs.chi_eta)
        u = state.velocity()
        grad_phi = _cell_gradient(phis[index], grid.h)
        grad_theta = _cell_gradient(state.theta, grid.h)
        grad_u = np.stack([_cell_gradient(u[..., 0], grid.h), _cell_gradient(u[..., 1], grid.h)], axis=-2)
        kappa = transport.kappa(state.theta)
        sigma = entropy_production(transport, state.theta, grad_u, grad_theta)
        integrand = (
            rho_s * (dphi_dt[index] + np.sum(u * grad_phi, axis=-1))
            - kappa * np.sum(grad_theta * grad_phi, axis=-1) / state.theta
            + sigma * phis[index]
            - lam * state.theta**4 * phis[index]
        )
        if source is not None:
            x, y = grid.mesh
            integrand = integrand + source(frame.time, x, y) * phis[index] / state.theta
        bulk[index] = grid.integrate(np.where(interior, integrand, 0.0))
        bulk_density[index] = grid.integrate(np.where(interior, rho_s * phis[index], 0.0))

        n = frame.shell_theta.size
        theta_y = _gamma_derivative(frame.shell_theta)
        w_y = frame.displacement.node_derivative()
        psi_y = _gamma_derivative(psis[index])
        psi_ty = _gamma_derivative(dpsi_dt[index])
        shell[index] = float(np.sum(frame.shell_theta * dpsi_dt[index] - theta_y * psi_y + w_y * psi_ty)) / n
        shell_density[index] = float(np.sum(frame.shell_theta * psis[index] + w_y * psi_y)) / n

    lhs = float(np.trapezoid(bulk + shell, times))
    rhs = (bulk_density[-1] - bulk_density[0]) + (shell_density[-1] - shell_density[0])
    residual = lhs - rhs
    logger.debug("diagnostics.entropy_residual frames={} residual={:.3e}", len(frames), residual)
    return residual


def energy_balance_residual(
    trajectory: Trajectory,
    pair: WeakTestPair,
    solver: FluidSolver,
    sink: float | None = None,
    energy_source: FluidTest | None = None,
    momentum_source: FluidTest | None = None,
) -> float:
    """LHS − RHS of the weak total-energy balance of the fluid against a bulk test field.

    E = ½ρ|u|² + ρe_η + δ/(β−1)ρ^β is carried by the flux (E + p)u − Su + q. The
    radiation sink −λϑ⁵, an internal energy source f_E and the work f_m·u of a
    momentum source enter the right-hand side. ψ must vanish, so no traction or shell
    terms appear; quadrature follows `entropy_inequality_residual`.
    """
    if pair.kind != "entropy":
        raise ValidationError("the energy balance takes a scalar test pair", [pair.kind])
    frames = trajectory.frames
    if len(frames) < 2:
        raise ValidationError("the energy residual needs at least two frames", [len(frames)])
    if any(np.any(pair.gamma_values(f.time, f.displacement) != 0.0) for f in frames):
        raise ValidationError("the bulk energy balance needs ψ = 0 on Γ", [pair.kind])
    lam = solver.params.lam if sink is None else sink
    grid = trajectory.grid
    times = trajectory.times
    x, y = grid.mesh
    phis = np.stack([pair.on_grid(f.time, grid, f.displacement) for f in frames])
    dphi_dt = np.gradient(phis, times, axis=0)

    bulk = np.empty(len(frames))
    density = np.empty(len(frames))
    for index, frame in enumerate(frames):
        state, coeffs = frame.fluid, frame.coefficients
        energy = solver.total_energy_density(state, coeffs.chi_eta)
        pressure = solver.gas.pressure(state.rho, state.theta, coeffs.chi_eta)
        u = state.velocity()
        grad_phi = _cell_gradient(phis[index], grid.h)
        grad_theta = _cell_gradient(state.theta, grid.h)
        grad_u = np.stack([_cell_gradient(u[..., 0], grid.h), _cell_gradient(u[..., 1], grid.h)], axis=-2)
        stress = stress_tensor(solver.transport, state.theta, grad_u)
        flux = (
            (energy + pressure)[..., None] * u
            - np.einsum("...ij,...j->...i", stress, u)
            + heat_flux(solver.transport, state.theta, grad_theta)
        )
        integrand = energy * dphi_dt[index] + np.sum(flux * grad_phi, axis=-1) - lam * state.theta**5 * phis[index]
        if energy_source is not None:
            integrand = integrand + energy_source(frame.time, x, y) * phis[index]
        if momentum_source is not None:
            integrand = integrand + np.sum(momentum_source(frame.time, x, y) * u, axis=-1) * phis[index]
        bulk[index] = grid.integrate(np.where(coeffs.interior, integrand, 0.0))
        density[index] = grid.integrate(np.where(coeffs.interior, energy * phis[index], 0.0))

    residual = float(np.trapezoid(bulk, times)) - (density[-1] - density[0])
    logger.debug("diagnostics.energy_residual frames={} residual={:.3e}", len(frames), residual)
    return residual


# ---------------------------------------------------------------------- Korn quotient


def _interior_gradient(field: FloatArray, mask: BoolArray, h: float, axis: int) -> FloatArray:
    """Centred differences inside the mask, one-sided where a neighbour leaves it."""
    forward = np.zeros_like(field)
    backward = np.zeros_like(field)
    has_forward = np.zeros_like(mask)
    has_backward = np.zeros_like(mask)
    lead = [slice(None)] * 2
    trail = [slice(None)] * 2
    lead[axis], trail[axis] = slice(1, None), slice(None, -1)
    lead_t, trail_t = tuple(lead), tuple(trail)
    step = (field[lead_t] - field[trail_t]) / h
    both = mask[lead_t] & mask[trail_t]
    forward[trail_t] = np.where(both, step, 0.0)
    has_forward[trail_t] = both
    backward[lead_t] = np.where(both, step, 0.0)
    has_backward[lead_t] = both
    count = has_forward.astype(float) + has_backward.astype(float)
    return np.where(count > 0, (forward + backward) / np.maximum(count, 1.0), 0.0)


def _gauss_points(grid: CellGrid) -> list[tuple[float, float]]:
    offset = grid.h / (2.0 * np.sqrt(3.0))
    return [(sx * offset, sy * offset) for sx in (-1.0, 1.0) for sy in (-1.0, 1.0)]


def korn_quotient(
    state: FluidState,
    w: DisplacementSample,
    geometry: ReferenceGeometry,
    grid: CellGrid,
    q: float = 1.5,
    mass_floor: float = 1e-3,
    quadrature: Literal["midpoint", "gauss"] = "midpoint",
) -> float:
    """‖u‖²_{W^{1,q}(Ω^w)} / (‖∇u + ∇ᵀu‖²_{L²(Ω^w)} + ∫ρ|u|²).

    `midpoint` integrates over cells whose centre lies in Ω^w. `gauss` uses the 2×2
    Gauss points of every cell, masked by Ω^w, with u reconstructed linearly from
    the cell gradient.
    """
    if not 1.0 <= q < 2.0:
        raise ValidationError("the Korn exponent must lie in [1, 2)", [q])
    if quadrature not in ("midpoint", "gauss"):
        raise ValidationError("unknown quadrature", [quadrature])
    x, y = grid.mesh
    if quadrature == "midpoint":
        points = [(0.0, 0.0)]
        masks = [geometry.contains(w, grid.points).reshape(grid.n, grid.n)]
    else:
        points = _gauss_points(grid)
        masks = [
            geometry.contains(w, np.stack([x.ravel() + ox, y.ravel() + oy], axis=-1)).reshape(grid.n, grid.n)
            for ox, oy in points
        ]
    support = np.logical_or.reduce(masks)
    weight = grid.cell_area / len(points)
    mass = sum(float(np.sum(np.where(mask, state.rho, 0.0))) for mask in masks) * weight
    if mass < mass_floor:
        raise ValidationError(f"interior mass {mass:.3e} is below the floor {mass_floor:g}", [mass])
    u = state.velocity()
    grad = np.empty((*u.shape[:2], 2, 2))
    for i in range(2):
        for j in range(2):
            grad[..., i, j] = _interior_gradient(u[..., i], support, grid.h, axis=j)
    grad_q = np.sum(np.abs(grad) ** q, axis=(-2, -1))
    sym = grad + np.swapaxes(grad, -1, -2)
    sym_2 = np.sum(sym**2, axis=(-2, -1))
    numerator = denominator = 0.0
    for (ox, oy), mask in zip(points, masks, strict=True):
        u_k = u + grad[..., 0] * ox + grad[..., 1] * oy
        numerator += float(np.sum(np.where(mask, np.sum(np.abs(u_k) ** q, axis=-1) + grad_q, 0.0))) * weight
        denominator += float(np.sum(np.where(mask, sym_2 + state.rho * np.sum(u_k**2, axis=-1), 0.0))) * weight
    numerator **= 2.0 / q
    if denominator <= 0.0:
        if numerator <= 0.0:
            return 0.0
        logger.warning("diagnostics.korn_degenerate numerator={:.3e}", numerator)
        return float("inf")
    return numerator / denominator


# ---------------------------------------------------------------------- pressure strip


def strip_profile(offset: FloatArray, k: float) -> FloatArray:
    """min{K (d − w), 1}."""
    return np.minimum(k * np.asarray(offset, dtype=float), 1.0)


@dataclass(frozen=True)
class StripReport:
    k: float
    integral: float
    cells: int
    area: float
    min_divergence: float
    divergence_bound: float

    @property
    def certified(self) -> bool:
        return self.cells == 0 or self.min_divergence >= self.divergence_bound


def pressure_strip_monitor(
    state: FluidState,
    coeffs: CoefficientFields,
    w: DisplacementSample,
    geometry: ReferenceGeometry,
    grid: CellGrid,
    gas: ExtendedGas,
    k: float,
) -> StripReport:
    """Pressure integral over S_K = {|d − w(π)| < 1/K} and the divergence certificate of φ^K."""
    thickness = geometry.b - geometry.a
    if k < 2.0 / thickness:
        raise ValidationError(f"strip parameter K={k} is below 2 / tube thickness", [k])
    y, d = geometry.tube_coordinates(grid.points)
    tube = geometry.in_tube(d)
    offset = (d - w.evaluate(y)).reshape(grid.n, grid.n)
    strip = (tube.reshape(grid.n, grid.n)) & (np.abs(offset) < 1.0 / k)

    # div(g ∇d) = ∂g/∂d + g Δd with g = f_Γ(d) min{K(d − w), 1}
    profile = geometry.profile(d).reshape(grid.n, grid.n)
    slope = geometry.profile.derivative(d).reshape(grid.n, grid.n)
    kappa = geometry.curvature(y).reshape(grid.n, grid.n)
    dd = d.reshape(grid.n, grid.n)
    ramp = strip_profile(offset, k)
    divergence = slope * ramp + profile * k * (offset * k < 1.0) + profile * ramp * kappa / (1.0 + kappa * dd)
    constant = float(np.max(np.abs(slope[strip]), initial=0.0)) + geometry.curvature_factor_bound()

    pressure = gas.pressure(state.rho, state.theta, coeffs.chi_eta)
    return StripReport(
        k=k,
        integral=grid.integrate(np.where(strip, pressure, 0.0)),
        cells=int(np.count_nonzero(strip)),
        area=float(np.count_nonzero(strip) * grid.cell_area),
        min_divergence=float(np.min(divergence[strip], initial=np.inf)),
        divergence_bound=k - constant,
    )


# ---------------------------------------------------------------------- penalization defect


def penalization_defect(trajectory: Trajectory) -> float:
    """δ∫₀ᵀ (‖τ − θ‖²_{L²(Γ)} + ‖v − ∂t w n‖²_{L²(Γ)}) by the trapezoid rule over frames."""
    frames = trajectory.frames
    if len(frames) < 2:
        return 0.0
    values = []
    for frame in frames:
        kinematic = frame.velocity_trace - frame.shell_velocity[:, None] * frame.normals
        thermal = frame.theta_trace - frame.shell_theta
        values.append(float(np.sum(frame.gamma_weights * (np.sum(kinematic**2, axis=-1) + thermal**2))))
    return trajectory.delta * float(np.trapezoid(values, trajectory.times))


def min_shell_theta(frame_theta: FloatArray) -> float:
    return float(np.min(frame_theta))
