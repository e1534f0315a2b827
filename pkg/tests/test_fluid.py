from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from fsiheat.config import parse_config
from fsiheat.constitutive import GasModel, TransportModel
from fsiheat.coupling import build_initial_state, build_problem
from fsiheat.errors import ValidationError
from fsiheat.extension import ApproxParams, ExtendedGas
from fsiheat.fluid import (
    FluidParams,
    FluidSolver,
    FluidState,
    FluidStep,
    bump_test,
    fsp_advance,
    radiation_relaxation,
    relative_helmholtz,
    renormalized_continuity_residual,
)
from fsiheat.geometry import CellGrid
from fsiheat.interface import build_stencil
from fsiheat.structure import advance_window

SMALL_RUN = """
fluid.nx = 16
geometry.n_gamma = 16
shell.modes = 4
shell.substeps = 2
"""


def _solver(n: int = 16) -> FluidSolver:
    params = ApproxParams()
    return FluidSolver(CellGrid(n, 2.0), ExtendedGas(GasModel(), params), TransportModel(), params)


def _smooth_state(grid: CellGrid) -> FluidState:
    x, y = grid.mesh
    rho = 1.0 + 0.3 * np.cos(np.pi * x / 2.0) * np.cos(np.pi * y / 2.0)
    momentum = np.stack([0.1 * rho * np.sin(np.pi * y / 2.0), -0.05 * rho * np.sin(np.pi * x / 2.0)], axis=-1)
    theta = 1.0 + 0.2 * np.exp(-(x**2 + y**2))
    return FluidState(rho=rho, momentum=momentum, theta=theta)


def test_fluid_state_shapes_are_checked() -> None:
    with pytest.raises(ValidationError):
        FluidState(rho=np.ones((4, 4)), momentum=np.zeros((4, 4)), theta=np.ones((4, 4)))


def test_fluid_settings_bound_the_cfl_number() -> None:
    with pytest.raises(ValidationError):
        FluidParams(cfl=0.6)


def test_solver_runs_the_prototype_law_only() -> None:
    params = ApproxParams()
    gas = GasModel.from_molecular_law(lambda z: z, z_lower=0.5, z_upper=2.0)

    with pytest.raises(ValidationError):
        FluidSolver(CellGrid(8, 2.0), ExtendedGas(gas, params), TransportModel(), params)


def test_temperature_recovery_inverts_the_internal_energy() -> None:
    solver = _solver()
    rho = np.array([0.0, 0.5, 2.0, 1e-6])
    theta = np.array([0.3, 1.0, 4.0, 0.05])
    chi = np.array([0.01, 1.0, 1.0, 0.5])

    recovered, deficit = solver.recover_temperature(rho, solver.internal_energy(rho, theta, chi), chi)

    np.testing.assert_allclose(recovered, theta, rtol=1e-10)
    np.testing.assert_array_equal(deficit, 0.0)


def test_temperature_recovery_clamps_at_the_floor() -> None:
    solver = _solver()

    theta, deficit = solver.recover_temperature(np.array([1.0]), np.array([0.5]), np.array([1.0]))

    # the cold part 1.5 exceeds the available energy
    assert theta[0] == solver.settings.theta_floor
    assert deficit[0] == pytest.approx(1.0, rel=1e-6)


def test_uniform_rest_state_has_no_flux_divergence() -> None:
    solver = _solver()
    n = solver.grid.n
    state = FluidState(rho=np.full((n, n), 1.3), momentum=np.zeros((n, n, 2)), theta=np.full((n, n), 0.8))

    divergence = solver.flux_divergence(state, np.ones((n, n)))

    np.testing.assert_allclose(divergence, 0.0, atol=1e-12)


def test_transport_step_conserves_mass_and_total_energy() -> None:
    solver = _solver()
    grid = solver.grid
    state = _smooth_state(grid)
    chi = np.ones((grid.n, grid.n))
    dt = 0.2 * grid.h / solver.max_signal_speed(state, chi)
    energy_before = grid.integrate(solver.total_energy_density(state, chi))

    updated, rho_e = solver.transport_step(state, chi, dt, FluidStep(state=state))

    assert solver.mass(updated) == pytest.approx(solver.mass(state), rel=1e-13)
    energy_after = grid.integrate(
        solver.kinetic_density(updated.rho, updated.momentum) + rho_e + solver.gas.artificial_energy(updated.rho)
    )
    assert energy_after == pytest.approx(energy_before, rel=1e-10)
    assert np.all(updated.rho > 0.0)


def test_radiation_relaxation_removes_the_sink_energy() -> None:
    gas = ExtendedGas(GasModel(), ApproxParams())
    rho = np.array([0.0, 1.0, 2.0])
    theta = np.array([2.0, 1.5, 0.7])
    chi = np.array([0.1, 1.0, 1.0])
    rho_e = gas.energy_density(rho, theta, chi)

    relaxed = radiation_relaxation(gas, rho, rho_e, theta, chi, sink=0.05)

    assert np.all(relaxed < theta)
    np.testing.assert_allclose(rho_e - gas.energy_density(rho, relaxed, chi), 0.05 * relaxed**5, rtol=1e-10)


def test_relative_helmholtz_vanishes_at_the_reference_and_is_nonnegative() -> None:
    gas = ExtendedGas(GasModel(), ApproxParams())
    rho, theta = np.meshgrid(np.linspace(0.2, 3.0, 15), np.linspace(0.3, 3.0, 15), indexing="ij")
    chi = np.ones_like(rho)

    values = relative_helmholtz(gas, rho, theta, chi, rho_bar=1.0, theta_bar=1.0)
    at_reference = relative_helmholtz(gas, np.array(1.0), np.array(1.0), np.array(1.0), rho_bar=1.0)

    assert float(at_reference) == pytest.approx(0.0, abs=1e-14)
    assert np.all(values >= -1e-12)
    with pytest.raises(ValidationError):
        relative_helmholtz(gas, rho, theta, chi, rho_bar=0.0)


def test_renormalized_continuity_residual_of_a_resting_fluid() -> None:
    grid = CellGrid(32, 2.0)
    times = np.linspace(0.0, 1.0, 401)
    rho = np.full((grid.n, grid.n), 1.2)
    u = np.zeros((grid.n, grid.n, 2))

    residual = renormalized_continuity_residual(
        grid, times, [rho] * times.size, [u] * times.size, lambda r: r**2, lambda r: 2.0 * r, bump_test()
    )

    assert abs(residual) < 1e-4


def test_renormalized_continuity_needs_two_snapshots() -> None:
    grid = CellGrid(8, 2.0)
    rho = np.ones((8, 8))

    with pytest.raises(ValidationError):
        renormalized_continuity_residual(
            grid, [0.0], [rho], [np.zeros((8, 8, 2))], lambda r: r, lambda r: np.ones_like(r), bump_test()
        )


def test_fsp_advance_conserves_mass_and_keeps_temperatures_positive() -> None:
    problem = build_problem(parse_config(SMALL_RUN))
    start = build_initial_state(problem)
    stencil = build_stencil(problem.geometry, start.displacement, problem.grid)
    n_gamma = problem.geometry.n_gamma
    shell_step = advance_window(start.shell, np.zeros(n_gamma), np.ones(n_gamma), problem.shell)

    state = fsp_advance(problem.fluid, start.fluid, shell_step, start.coefficients, stencil, window=0)

    assert problem.fluid.mass(state) == pytest.approx(problem.fluid.mass(start.fluid), rel=1e-10)
    assert np.all(state.theta > 0.0)
    assert np.all(np.isfinite(state.momentum))


def test_substep_count_is_a_multiple_of_the_shell_substeps() -> None:
    problem = build_problem(parse_config(SMALL_RUN))
    start = build_initial_state(problem)

    count = problem.fluid.substep_count(start.fluid, start.coefficients, 3)

    assert count % 3 == 0
    assert count >= 3


def test_dilute_cells_are_relative_to_the_densest_cell() -> None:
    solver = _solver()

    dilute = solver.dilute_cells(np.array([2.0, 1e-6, 3e-6, 0.0]))

    np.testing.assert_array_equal(dilute, [False, True, False, True])
    with pytest.raises(ValidationError, match="dilute"):
        FluidParams(dilute=1.0)


def test_near_vacuum_momentum_does_not_set_the_signal_speed() -> None:
    solver = _solver()
    grid = solver.grid
    rho = np.ones((grid.n, grid.n))
    rho[0, 0] = 4e-9
    momentum = np.zeros((grid.n, grid.n, 2))
    wild = momentum.copy()
    wild[0, 0] = rho[0, 0] * np.array([883.0, 0.0])
    chi = np.ones_like(rho)

    tame_speed = solver.max_signal_speed(FluidState(rho=rho, momentum=momentum, theta=np.ones_like(rho)), chi)
    wild_speed = solver.max_signal_speed(FluidState(rho=rho, momentum=wild, theta=np.ones_like(rho)), chi)

    assert wild_speed == tame_speed
    assert wild_speed < 100.0


def test_velocity_limiter_caps_thin_cells_at_the_bulk_speed() -> None:
    solver = _solver()
    rho = np.array([1.0, 0.5, 1e-3, 1e-3])
    u = np.array([[0.3, 0.0], [0.0, 0.4], [3.0, 4.0], [0.1, 0.0]])

    limited = solver.limit_velocity(rho, u)

    np.testing.assert_allclose(limited, [[0.3, 0.0], [0.0, 0.4], [0.24, 0.32], [0.1, 0.0]])
    np.testing.assert_array_equal(solver.limit_velocity(np.full(2, 1e-3), u[:2] * 50.0), u[:2] * 50.0)


def test_remap_onto_new_coefficients_keeps_the_stored_energy() -> None:
    problem = build_problem(parse_config(SMALL_RUN + "initial.swirl = 0.5\ninitial.noise = 0.1"))
    start = build_initial_state(problem)
    old = start.coefficients
    new = replace(old, chi_eta=0.5 * old.chi_eta + 0.25)

    remapped, clamp = problem.fluid.remap(start.fluid, old, new)

    assert clamp == 0.0
    np.testing.assert_allclose(
        problem.fluid.internal_energy(remapped.rho, remapped.theta, new.chi_eta),
        problem.fluid.internal_energy(start.fluid.rho, start.fluid.theta, old.chi_eta),
        rtol=1e-12,
    )
    assert problem.fluid.fluid_energy(remapped, new).total == pytest.approx(
        problem.fluid.fluid_energy(start.fluid, old).total, rel=1e-13
    )
    assert not np.array_equal(remapped.theta, start.fluid.theta)
    assert problem.fluid.remap(start.fluid, old, old) == (start.fluid, 0.0)


def test_a_resting_density_jump_sends_no_mass_across() -> None:
    solver = _solver()
    n = solver.grid.n
    rho = np.zeros((n, n))
    rho[: n // 2] = 1.0
    state = FluidState(rho=rho, momentum=np.zeros((n, n, 2)), theta=np.ones((n, n)))

    divergence = solver.flux_divergence(state, np.ones((n, n)))

    np.testing.assert_array_equal(divergence[0], 0.0)
    np.testing.assert_array_equal(divergence[3], 0.0)
    assert np.max(divergence[1]) > 0.0
