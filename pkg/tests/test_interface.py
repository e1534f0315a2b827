from __future__ import annotations

import numpy as np
import pytest

from fsiheat.errors import ValidationError
from fsiheat.geometry import CellGrid, DisplacementSample, build_geometry
from fsiheat.interface import build_stencil, compute_traces, interpolation_matrix, kernel_weights


def _setup(  # type: ignore[no-untyped-def]
    w: DisplacementSample | None = None, radius: int = 1, measure: str = "reference"
):
    geometry = build_geometry(n_gamma=32)
    grid = CellGrid(32, geometry.half_width)
    w = w if w is not None else DisplacementSample.zeros(32)
    stencil = build_stencil(geometry, w, grid, kernel_radius=radius, penalty_measure=measure)  # type: ignore[arg-type]
    return grid, stencil


@pytest.mark.parametrize("radius", [1, 2])
def test_kernel_weights_partition_unity(radius: int) -> None:
    offset = 0.37
    shifts = np.arange(-radius + 1, radius + 1)

    assert np.sum(kernel_weights(offset - shifts, radius)) == pytest.approx(1.0)


def test_unknown_kernel_radius() -> None:
    with pytest.raises(ValidationError):
        kernel_weights(np.zeros(3), 3)


def test_interpolation_rows_sum_to_one() -> None:
    grid = CellGrid(16, 2.0)
    points = np.array([[0.1, -0.3], [1.2, 0.7], [-1.4, 1.1]])

    matrix = interpolation_matrix(points, grid, 2)

    np.testing.assert_allclose(np.asarray(matrix.sum(axis=1)).ravel(), 1.0)


@pytest.mark.parametrize("radius", [1, 2])
def test_interpolation_reproduces_constants(radius: int) -> None:
    grid, stencil = _setup(radius=radius)

    np.testing.assert_allclose(stencil.interpolate(np.full((grid.n, grid.n), 2.5)), 2.5)


def test_bilinear_interpolation_is_exact_for_linear_fields() -> None:
    grid, stencil = _setup(w=DisplacementSample(0.1 * np.cos(2.0 * np.pi * np.arange(32) / 32)))
    x, y = grid.mesh

    values = stencil.interpolate(0.5 + 2.0 * x - y)

    expected = 0.5 + 2.0 * stencil.positions[:, 0] - stencil.positions[:, 1]
    np.testing.assert_allclose(values, expected, atol=1e-12)


def test_spreading_is_the_adjoint_of_interpolation() -> None:
    grid, stencil = _setup(radius=2, measure="deformed")
    rng = np.random.default_rng(11)
    g = rng.normal(size=stencil.n_nodes)
    phi = rng.normal(size=(grid.n, grid.n))

    box = grid.integrate(stencil.spread(g) * phi)
    boundary = stencil.boundary_integral(g * stencil.interpolate(phi))

    assert box == pytest.approx(boundary, rel=1e-10, abs=1e-12)


def test_vector_fields_interpolate_componentwise() -> None:
    grid, stencil = _setup()
    field = np.zeros((grid.n, grid.n, 2))
    field[..., 0], field[..., 1] = 1.0, -3.0

    values = stencil.interpolate(field)

    assert values.shape == (stencil.n_nodes, 2)
    np.testing.assert_allclose(values, np.broadcast_to([1.0, -3.0], values.shape))
    assert stencil.spread(values).shape == (grid.n, grid.n, 2)


def test_penalty_measures() -> None:
    constant = DisplacementSample(np.full(32, 0.1))
    _, reference = _setup(w=constant)
    _, deformed = _setup(w=constant, measure="deformed")

    assert reference.boundary_integral(np.ones(32)) == pytest.approx(1.0)
    assert deformed.boundary_integral(np.ones(32)) == pytest.approx(1.1, abs=1e-6)
    with pytest.raises(ValidationError):
        _setup(measure="lagrangian")


def test_gram_matches_the_weighted_interpolation_form() -> None:
    grid, stencil = _setup()
    phi = np.random.default_rng(5).normal(size=grid.n * grid.n)

    quadratic = phi @ (stencil.gram() @ phi)
    trace = stencil.interpolate(phi.reshape(grid.n, grid.n))

    assert quadratic == pytest.approx(float(np.sum(stencil.weights * trace**2)))


def test_stencil_needs_the_geometry_nodes() -> None:
    geometry = build_geometry(n_gamma=32)

    with pytest.raises(ValidationError):
        build_stencil(geometry, DisplacementSample.zeros(16), CellGrid(16, geometry.half_width))


def test_traces_of_a_uniform_flow() -> None:
    grid, stencil = _setup()
    rho = np.full((grid.n, grid.n), 2.0)
    momentum = np.broadcast_to(2.0 * np.array([0.3, -0.2]), (grid.n, grid.n, 2))
    theta = np.full((grid.n, grid.n), 1.5)

    velocity, temperature = compute_traces(rho, momentum, theta, stencil)

    np.testing.assert_allclose(velocity, np.broadcast_to([0.3, -0.2], velocity.shape))
    np.testing.assert_allclose(temperature, 1.5)


def test_vacuum_cells_carry_no_velocity() -> None:
    grid, stencil = _setup()
    rho = np.zeros((grid.n, grid.n))
    momentum = np.ones((grid.n, grid.n, 2))

    velocity, _ = compute_traces(rho, momentum, np.ones((grid.n, grid.n)), stencil)

    assert np.all(velocity == 0.0)
