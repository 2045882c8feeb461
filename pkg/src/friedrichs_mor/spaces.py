"""Discrete spaces on structured grids: bilinear scalars, RT0 fluxes, boundary traces.

Flux DOFs live on edges and are the value of the normal component with a
global orientation: vertical edges use the normal ``+x`` and horizontal
edges the normal ``+y``. On a structured grid both neighbours of an edge
see the same orientation, so no sign flips occur during assembly.

On a cell with local coordinates ``(xi, eta)`` in ``[0,1]^2`` the four RT0
shape functions are::

    left   ((1 - xi), 0)      right  (xi, 0)
    bottom (0, (1 - eta))     top    (0, eta)

and the bilinear nodal functions are ordered ``(0,0), (1,0), (0,1), (1,1)``.

Mixed coefficient vectors are stacked as ``[flux DOFs, scalar DOFs]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from friedrichs_mor.exceptions import SpaceMismatch
from friedrichs_mor.grid import StructuredGrid, SubdomainPair


def q1_shape(xi, eta):
    """Values and reference gradients of the bilinear shape functions.

    Returns arrays of shape ``(..., 4)`` and ``(..., 4, 2)``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    values = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1)
    dxi = np.stack([-(1 - eta), 1 - eta, -eta, eta], axis=-1)
    deta = np.stack([-(1 - xi), -xi, 1 - xi, xi], axis=-1)
    return values, np.stack([dxi, deta], axis=-1)


def rt0_shape(xi, eta):
    """Values of the four RT0 shape functions, shape ``(..., 4, 2)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    zero = np.zeros(np.broadcast(xi, eta).shape)
    xi = xi + zero
    eta = eta + zero
    fx = np.stack([1 - xi, xi, zero, zero], axis=-1)
    fy = np.stack([zero, zero, 1 - eta, eta], axis=-1)
    return np.stack([fx, fy], axis=-1)


# reference divergence of the RT0 shape functions; divide by h for physical cells
RT0_REFERENCE_DIVERGENCE = np.array([-1.0, 1.0, -1.0, 1.0])


def _check_cell_args(grid, cell, local_coords):
    cell = np.asarray(cell)
    if np.any(cell < 0) or np.any(cell >= grid.n_cells):
        raise IndexError(f"cell index out of range [0, {grid.n_cells})")
    local = np.asarray(local_coords, dtype=float)
    if local.shape[-1] != 2:
        raise ValueError("local coordinates must have a trailing dimension of 2")
    if np.any(local < 0) or np.any(local > 1):
        raise ValueError("local coordinates must lie in [0, 1]^2")
    return cell, local


@dataclass(frozen=True, eq=False)
class ScalarSpace:
    """Continuous bilinear Lagrange space; one DOF per grid node."""

    grid: StructuredGrid

    @property
    def n_dofs(self) -> int:
        return self.grid.n_nodes

    @property
    def boundary_dofs(self) -> np.ndarray:
        return self.grid.boundary_nodes

    def evaluate(self, cell, local_coords, coeffs):
        """Value and physical gradient at ``local_coords`` of ``cell``."""
        cell, local = _check_cell_args(self.grid, cell, local_coords)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.n_dofs:
            raise SpaceMismatch(f"expected {self.n_dofs} scalar coefficients, got {coeffs.shape[0]}")
        values, grads = q1_shape(local[..., 0], local[..., 1])
        c = coeffs[self.grid.cell_nodes[cell]]
        value = np.sum(values * c, axis=-1)
        gradient = np.sum(grads * c[..., None], axis=-2) / self.grid.h
        return value, gradient

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)``."""
        x, y = self.grid.node_coords.T
        return np.asarray(func(x, y), dtype=float) * np.ones(self.n_dofs)


@dataclass(frozen=True, eq=False)
class FluxSpace:
    """Lowest-order Raviart-Thomas space; one normal-component DOF per edge."""

    grid: StructuredGrid

    @property
    def n_dofs(self) -> int:
        return self.grid.n_edges

    @cached_property
    def edge_normals(self) -> np.ndarray:
        normals = np.zeros((self.n_dofs, 2))
        normals[:self.grid.n_horizontal_edges, 1] = 1.0
        normals[self.grid.n_horizontal_edges:, 0] = 1.0
        return normals

    def evaluate(self, cell, local_coords, coeffs):
        """Vector value and (cellwise constant) divergence."""
        cell, local = _check_cell_args(self.grid, cell, local_coords)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.n_dofs:
            raise SpaceMismatch(f"expected {self.n_dofs} flux coefficients, got {coeffs.shape[0]}")
        shapes = rt0_shape(local[..., 0], local[..., 1])
        c = coeffs[self.grid.cell_edges[cell]]
        value = np.sum(shapes * c[..., None], axis=-2)
        divergence = c @ RT0_REFERENCE_DIVERGENCE / self.grid.h
        return value, divergence

    def interpolate(self, func) -> np.ndarray:
        """Normal components of the vector field ``func(x, y) -> (fx, fy)`` at edge midpoints.

        Exact for fields of the form ``(a + b x, c + d y)``.
        """
        x, y = self.grid.edge_midpoints.T
        fx, fy = func(x, y)
        fx = np.broadcast_to(np.asarray(fx, dtype=float), x.shape)
        fy = np.broadcast_to(np.asarray(fy, dtype=float), x.shape)
        return fx * self.edge_normals[:, 0] + fy * self.edge_normals[:, 1]


@dataclass(frozen=True, eq=False)
class BoundarySpace:
    """Continuous piecewise-linear functions on the closed boundary loop.

    DOF ``k`` is the value at the ``k``-th boundary node in counter-clockwise
    order starting at the bottom-left corner.
    """

    grid: StructuredGrid

    @property
    def n_dofs(self) -> int:
        return 2 * (self.grid.nx + self.grid.ny)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.boundary_nodes

    def mass_matrix(self):
        """L2(boundary) Gram matrix of the hat functions (all segments have length h)."""
        n = self.n_dofs
        h = self.grid.h
        idx = np.arange(n)
        nxt = (idx + 1) % n
        rows = np.concatenate([idx, idx, nxt, nxt])
        cols = np.concatenate([idx, nxt, idx, nxt])
        vals = np.concatenate([np.full(n, 2.0), np.ones(n), np.ones(n), np.full(n, 2.0)]) * h / 6
        return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def interpolate(self, func) -> np.ndarray:
        x, y = self.grid.node_coords[self.nodes].T
        return np.asarray(func(x, y), dtype=float) * np.ones(self.n_dofs)


def boundary_to_scalar(space: BoundarySpace, g) -> tuple[np.ndarray, np.ndarray]:
    """Identify boundary-space coefficients with scalar nodal DOFs.

    Returns ``(dofs, values)`` such that ``u[dofs] = values`` imposes ``g``.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[0] != space.n_dofs:
        raise SpaceMismatch(f"expected {space.n_dofs} boundary coefficients, got {g.shape[0]}")
    return space.nodes, g


@dataclass(frozen=True, eq=False)
class MixedSpace:
    flux: FluxSpace
    scalar: ScalarSpace

    @classmethod
    def on(cls, grid: StructuredGrid) -> "MixedSpace":
        return cls(FluxSpace(grid), ScalarSpace(grid))

    @property
    def grid(self) -> StructuredGrid:
        return self.scalar.grid

    @property
    def n_flux(self) -> int:
        return self.flux.n_dofs

    @property
    def n_dofs(self) -> int:
        return self.flux.n_dofs + self.scalar.n_dofs

    @property
    def scalar_offset(self) -> int:
        return self.flux.n_dofs

    def split(self, vector):
        vector = np.asarray(vector)
        if vector.shape[0] != self.n_dofs:
            raise SpaceMismatch(f"expected {self.n_dofs} mixed coefficients, got {vector.shape[0]}")
        return vector[:self.n_flux], vector[self.n_flux:]

    def element(self, vector) -> "MixedFunction":
        flux, scalar = self.split(vector)
        return MixedFunction(flux=flux, scalar=scalar, space=self)

    def interpolate(self, flux_func, scalar_func) -> "MixedFunction":
        return MixedFunction(self.flux.interpolate(flux_func), self.scalar.interpolate(scalar_func), self)

    def zeros(self) -> "MixedFunction":
        return MixedFunction(np.zeros(self.n_flux), np.zeros(self.scalar.n_dofs), self)


@dataclass(frozen=True, eq=False)
class MixedFunction:
    """A discrete pair ``(sigma, u)``."""

    flux: np.ndarray
    scalar: np.ndarray
    space: MixedSpace

    def __post_init__(self):
        if len(self.flux) != self.space.n_flux or len(self.scalar) != self.space.scalar.n_dofs:
            raise SpaceMismatch("coefficient lengths do not match the mixed space")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.flux, self.scalar])

    def evaluate(self, points):
        """Flux vector and scalar value at physical points."""
        cells, local = self.space.grid.locate(points)
        sigma, _ = self.space.flux.evaluate(cells, local, self.flux)
        u, _ = self.space.scalar.evaluate(cells, local, self.scalar)
        return sigma, u


@dataclass(frozen=True, eq=False)
class RestrictionMap:
    """Coefficient gather from the oversampling spaces to the interior spaces.

    Exact because the interior grid is a sub-grid of the oversampling grid.
    """

    source: MixedSpace
    target: MixedSpace
    flux_index: np.ndarray
    scalar_index: np.ndarray

    @classmethod
    def from_pair(cls, pair: SubdomainPair) -> "RestrictionMap":
        return cls(MixedSpace.on(pair.grid), MixedSpace.on(pair.interior_grid),
                   pair.interior_edges, pair.interior_nodes)

    @cached_property
    def mixed_index(self) -> np.ndarray:
        """Positions of the target mixed DOFs inside source mixed vectors."""
        return np.concatenate([self.flux_index, self.source.n_flux + self.scalar_index])

    def restrict_vector(self, vector) -> np.ndarray:
        """Restrict mixed coefficient vectors (works column-wise on 2D arrays)."""
        vector = np.asarray(vector)
        if vector.shape[0] != self.source.n_dofs:
            raise SpaceMismatch(f"expected {self.source.n_dofs} source coefficients, got {vector.shape[0]}")
        return vector[self.mixed_index]

    def extend_by_zero(self, vector) -> np.ndarray:
        vector = np.asarray(vector)
        if vector.shape[0] != self.target.n_dofs:
            raise SpaceMismatch(f"expected {self.target.n_dofs} target coefficients, got {vector.shape[0]}")
        out = np.zeros((self.source.n_dofs,) + vector.shape[1:])
        out[self.mixed_index] = vector
        return out


def restrict(rmap: RestrictionMap, f: MixedFunction) -> MixedFunction:
    if f.space.grid is not rmap.source.grid:
        raise SpaceMismatch("function does not live on the restriction source spaces")
    return MixedFunction(f.flux[rmap.flux_index], f.scalar[rmap.scalar_index], rmap.target)
