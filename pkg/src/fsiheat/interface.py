"""Interface stencil between the Γ-nodes of the deformed boundary and the fluid cells.

Interpolation is a sparse (n_Γ × N²) matrix of kernel weights; spreading is its
transpose scaled by the Γ quadrature weights and the inverse cell area, so

    ⟨spread(g), φ⟩_B = Σ_j W_j g_j · (I φ)_j = ⟨g, interp(φ)⟩_Γ.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse as sp

from fsiheat.errors import GeometryDegeneracyError, ValidationError
from fsiheat.geometry import CellGrid, DisplacementSample, ReferenceGeometry
from fsiheat.types import FloatArray

PenaltyMeasure = Literal["reference", "deformed"]


def kernel_weights(r: FloatArray, radius: int) -> FloatArray:
    """1D kernel in cell units: bilinear hat for radius 1, 4-point cosine for radius 2."""
    r = np.abs(np.asarray(r, dtype=float))
    if radius == 1:
        return np.maximum(0.0, 1.0 - r)
    if radius == 2:
        return np.where(r < 2.0, 0.25 * (1.0 + np.cos(0.5 * np.pi * r)), 0.0)
    raise ValidationError("kernel radius must be 1 or 2", [radius])


def interpolation_matrix(points: FloatArray, grid: CellGrid, radius: int) -> sp.csr_matrix:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    scaled = (points + grid.half_width) / grid.h - 0.5
    base = np.floor(scaled).astype(int)
    offsets = np.arange(-radius + 1, radius + 1)
    rows, cols, vals = [], [], []
    for dx in offsets:
        ix = base[:, 0] + dx
        wx = kernel_weights(scaled[:, 0] - ix, radius)
        for dy in offsets:
            iy = base[:, 1] + dy
            wy = kernel_weights(scaled[:, 1] - iy, radius)
            if np.any(((ix < 0) | (ix >= grid.n) | (iy < 0) | (iy >= grid.n)) & (wx * wy > 0.0)):
                raise GeometryDegeneracyError("interface kernel reaches outside the box")
            rows.append(np.arange(points.shape[0]))
            cols.append(np.clip(ix, 0, grid.n - 1) * grid.n + np.clip(iy, 0, grid.n - 1))
            vals.append(wx * wy)
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(points.shape[0], grid.n * grid.n),
    ).tocsr()
    row_sum = np.asarray(matrix.sum(axis=1)).ravel()
    return (sp.diags(1.0 / row_sum) @ matrix).tocsr()


@dataclass(frozen=True, eq=False)
class InterfaceStencil:
    grid: CellGrid
    positions: FloatArray
    reference_normals: FloatArray
    deformed_normals: FloatArray
    area_factor: FloatArray
    weights: FloatArray
    matrix: sp.csr_matrix

    @property
    def n_nodes(self) -> int:
        return int(self.positions.shape[0])

    def interpolate(self, field: FloatArray) -> FloatArray:
        """Trace of a cell field (N, N) or (N, N, c) at the deformed Γ-nodes."""
        field = np.asarray(field, dtype=float)
        flat = field.reshape(self.grid.n * self.grid.n, -1)
        out = self.matrix @ flat
        return out.ravel() if field.ndim == 2 else out

    def spread(self, values: FloatArray) -> FloatArray:
        """Cell density of a Γ-field, the adjoint of `interpolate`."""
        values = np.asarray(values, dtype=float)
        column = values.reshape(self.n_nodes, -1) * self.weights[:, None]
        out = (self.matrix.T @ column) / self.grid.cell_area
        if values.ndim == 1:
            return out.reshape(self.grid.n, self.grid.n)
        return out.reshape(self.grid.n, self.grid.n, -1)

    def gram(self) -> sp.csr_matrix:
        """Iᵀ W I, the cell-space form of the Γ penalty."""
        return (self.matrix.T @ sp.diags(self.weights) @ self.matrix).tocsr()

    def boundary_integral(self, values: FloatArray) -> float:
        values = np.asarray(values, dtype=float)
        if values.ndim > 1:
            values = np.sum(values, axis=tuple(range(1, values.ndim)))
        return float(np.dot(self.weights, values))


def build_stencil(
    geometry: ReferenceGeometry,
    w: DisplacementSample,
    grid: CellGrid,
    kernel_radius: int = 1,
    penalty_measure: PenaltyMeasure = "reference",
) -> InterfaceStencil:
    if w.n != geometry.n_gamma:
        raise ValidationError("displacement must live on the geometry's Γ-nodes", [w.n, geometry.n_gamma])
    nodes = w.nodes
    positions = geometry.deformed_boundary(w)
    deformed_normals, area = geometry.deformed_normal_and_area(w, nodes)
    dy = 1.0 / w.n
    if penalty_measure == "reference":
        weights = np.full(w.n, dy)
    elif penalty_measure == "deformed":
        weights = area * dy
    else:
        raise ValidationError("penalty measure must be 'reference' or 'deformed'", [penalty_measure])
    return InterfaceStencil(
        grid=grid,
        positions=positions,
        reference_normals=geometry.normal(nodes),
        deformed_normals=deformed_normals,
        area_factor=area,
        weights=weights,
        matrix=interpolation_matrix(positions, grid, kernel_radius),
    )


def compute_traces(
    rho: FloatArray, momentum: FloatArray, theta: FloatArray, stencil: InterfaceStencil, vacuum: float = 1e-12
) -> tuple[FloatArray, FloatArray]:
    """Lagrangian traces (u∘Φ_w, ϑ∘Φ_w) at the Γ-nodes."""
    safe = np.where(rho > vacuum, rho, 1.0)
    velocity = np.where((rho > vacuum)[..., None], momentum / safe[..., None], 0.0)
    return stencil.interpolate(velocity), stencil.interpolate(theta)
