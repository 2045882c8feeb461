"""Local least-squares problems on the oversampling domain and the transfer operator.

Boundary data ``g`` (coefficients of the piecewise-linear trace space on the
oversampling boundary) is imposed strongly on the scalar boundary nodes; flux
DOFs are never constrained. The transfer operator maps ``g`` to the solution
of the homogeneous ("shifted") local problem restricted to the interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from friedrichs_mor.assembly import (
    CoefficientField,
    OperatorMatrices,
    assemble_fosls,
    assemble_fosls_load,
    assemble_mass,
    graph_norm,
    interior_matrices,
    max_coefficient_matrix_norm,
)
from friedrichs_mor.exceptions import CapExceeded, SpaceMismatch
from friedrichs_mor.grid import Rect, SubdomainPair
from friedrichs_mor.linalg import Factorization, factorize
from friedrichs_mor.spaces import BoundarySpace, MixedFunction, MixedSpace, RestrictionMap, boundary_to_scalar, restrict

DEFAULT_MATRIX_CAP = 2000
_BATCH = 128


@dataclass(eq=False)
class TransferSystem:
    """Factorized local problem on the oversampling domain plus restriction to the interior.

    Build with :func:`build_transfer`; treat as immutable afterwards.
    """

    pair: SubdomainPair
    coeff: CoefficientField
    space: MixedSpace
    boundary: BoundarySpace
    stiffness: sps.csr_matrix
    factor: Factorization
    restriction: RestrictionMap
    interior: OperatorMatrices
    boundary_gram: sps.csr_matrix
    constrained: np.ndarray
    free: np.ndarray
    homogeneous: np.ndarray = field(default=None)
    _coupling: sps.csr_matrix = field(default=None, repr=False)

    @property
    def n_boundary(self) -> int:
        return self.boundary.n_dofs

    @property
    def n_interior(self) -> int:
        return self.restriction.target.n_dofs

    @property
    def interior_space(self) -> MixedSpace:
        return self.restriction.target

    @property
    def weighted_gram(self) -> sps.csr_matrix:
        return self.interior.weighted_gram

    @cached_property
    def oversampling_mass(self) -> sps.csr_matrix:
        return assemble_mass(self.pair.grid)

    def _check_boundary(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape[0] != self.n_boundary:
            raise SpaceMismatch(f"expected {self.n_boundary} boundary coefficients, got {g.shape[0]}")
        return g

    def solve_full(self, g, load=None) -> np.ndarray:
        """Mixed coefficient vectors on the oversampling domain (column-wise for 2D ``g``)."""
        g = self._check_boundary(g)
        if self.homogeneous is not None and np.any(self.homogeneous):
            g = g.copy()
            g[self.homogeneous] = 0.0
        n = self.space.n_dofs
        x = np.zeros((n,) + g.shape[1:])
        x[self.constrained] = g
        rhs = -(self._coupling @ g)
        if load is not None:
            rhs = rhs + (load[self.free][:, None] if g.ndim == 2 else load[self.free])
        x[self.free] = self.factor.solve(rhs)
        return x

    def apply_vectors(self, g) -> np.ndarray:
        """Interior mixed vectors ``T g`` (column-wise for 2D ``g``)."""
        g = self._check_boundary(g)
        if g.ndim == 1:
            return self.restriction.restrict_vector(self.solve_full(g))
        out = np.empty((self.n_interior, g.shape[1]))
        for start in range(0, g.shape[1], _BATCH):
            block = slice(start, start + _BATCH)
            out[:, block] = self.restriction.restrict_vector(self.solve_full(g[:, block]))
        return out


def build_transfer(pair: SubdomainPair, coeff: CoefficientField, global_domain: Rect | None = None) -> TransferSystem:
    """Assemble and factorize the local least-squares system once.

    If ``global_domain`` is given, oversampling boundary nodes lying on its
    boundary carry homogeneous Dirichlet data regardless of ``g``.
    """
    grid = pair.grid
    if coeff.n_cells != grid.n_cells:
        raise SpaceMismatch(f"coefficient field has {coeff.n_cells} cells, oversampling grid has {grid.n_cells}")
    space = MixedSpace.on(grid)
    boundary = BoundarySpace(grid)
    stiffness = assemble_fosls(grid, coeff)
    constrained = space.scalar_offset + boundary.nodes
    is_free = np.ones(space.n_dofs, dtype=bool)
    is_free[constrained] = False
    free = np.flatnonzero(is_free)
    reduced = stiffness[free][:, free]
    factor = factorize(reduced)
    coupling = stiffness[free][:, constrained].tocsr()

    homogeneous = None
    if global_domain is not None:
        x, y = grid.node_coords[boundary.nodes].T
        tol = 1e-12 * max(global_domain.width, global_domain.height)
        homogeneous = ((np.abs(x - global_domain.x0) < tol) | (np.abs(x - global_domain.x1) < tol)
                       | (np.abs(y - global_domain.y0) < tol) | (np.abs(y - global_domain.y1) < tol))

    return TransferSystem(
        pair=pair, coeff=coeff, space=space, boundary=boundary, stiffness=stiffness, factor=factor,
        restriction=RestrictionMap.from_pair(pair), interior=interior_matrices(pair, coeff),
        boundary_gram=boundary.mass_matrix(), constrained=constrained, free=free,
        homogeneous=homogeneous, _coupling=coupling,
    )


def apply_transfer(sys: TransferSystem, g) -> MixedFunction:
    """``T g``: solve the shifted local problem with boundary data ``g`` and restrict."""
    return sys.interior_space.element(sys.apply_vectors(np.asarray(g, dtype=float)))


def shifted_solution(sys: TransferSystem, g) -> MixedFunction:
    """Solution of the shifted local problem on the whole oversampling domain."""
    return sys.space.element(sys.solve_full(g))


def solve_local_affine(sys: TransferSystem, g, f_scalar=0.0) -> MixedFunction:
    """Solve the local problem with load ``(0, f_scalar)`` on the oversampling domain.

    ``f_scalar`` is a constant or one value per oversampling cell.
    """
    load = assemble_fosls_load(sys.pair.grid, sys.coeff, f_scalar)
    if not np.any(load):
        load = None
    _, values = boundary_to_scalar(sys.boundary, g)
    return sys.space.element(sys.solve_full(values, load=load))


def transfer_matrix(sys: TransferSystem, cap: int = DEFAULT_MATRIX_CAP) -> np.ndarray:
    """Dense matrix of ``T`` (interior mixed DOFs by boundary DOFs); column ``j`` is ``T e_j``."""
    if sys.n_boundary > cap:
        raise CapExceeded(f"{sys.n_boundary} boundary DOFs exceed the dense-matrix cap {cap}")
    return sys.apply_vectors(np.eye(sys.n_boundary))


def caccioppoli_ratio(sys: TransferSystem, solution: MixedFunction) -> tuple[float, float]:
    """Both sides of the interior energy-decay estimate for a shifted local solution.

    ``lhs`` is the interior graph norm, ``rhs`` is
    ``max_i ||A_i||_inf * 2 / delta * ||solution||_{L2(oversampling)}``.
    """
    if solution.space.grid is not sys.pair.grid:
        raise SpaceMismatch("solution must live on the oversampling grid")
    lhs = graph_norm(sys.interior, restrict(sys.restriction, solution))
    x = solution.vector
    l2 = float(np.sqrt(max(x @ (sys.oversampling_mass @ x), 0.0)))
    rhs = max_coefficient_matrix_norm(sys.coeff) * 2.0 / sys.pair.delta * l2
    return lhs, rhs
