"""Coefficients and matrices of the mixed convection-diffusion-reaction operator.

The first-order operator acting on ``(sigma, u)`` is::

    A(sigma, u) = ( D^{-1} sigma + grad u ,  div sigma + b . grad u + c u )

which is a Friedrichs operator ``A0 + A1 d/dx + A2 d/dy`` in the variables
``(sigma_1, sigma_2, u)``. Matrices are assembled cell by cell with tensor
Gauss quadrature; with bilinear/RT0 data and cellwise constant coefficients
every integrand is at most bi-quadratic, so two points per direction are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from friedrichs_mor.exceptions import NegativeDefinite, SpaceMismatch
from friedrichs_mor.grid import StructuredGrid, SubdomainPair
from friedrichs_mor.spaces import RT0_REFERENCE_DIVERGENCE, MixedFunction, MixedSpace, q1_shape, rt0_shape


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Cellwise coefficients: diagonal diffusion, constant convection, reaction.

    ``diffusion`` has shape ``(n_cells, 2)`` holding ``(D_11, D_22)`` per cell.
    """

    diffusion: np.ndarray
    convection: np.ndarray
    reaction: np.ndarray

    def __post_init__(self):
        diffusion = np.array(self.diffusion, dtype=float)
        reaction = np.array(self.reaction, dtype=float)
        convection = np.array(self.convection, dtype=float)
        if diffusion.ndim != 2 or diffusion.shape[1] != 2:
            raise ValueError("diffusion must have shape (n_cells, 2)")
        if reaction.shape != (diffusion.shape[0],):
            raise ValueError("reaction must have one value per cell")
        if convection.shape != (2,):
            raise ValueError("convection must be a constant 2-vector")
        if not (np.all(np.isfinite(diffusion)) and np.all(np.isfinite(reaction))
                and np.all(np.isfinite(convection))):
            raise ValueError("coefficients must be finite")
        if np.any(diffusion <= 0):
            raise ValueError("diffusion must be positive on every cell")
        for name, value in (("diffusion", diffusion), ("convection", convection), ("reaction", reaction)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_cells(self) -> int:
        return self.diffusion.shape[0]

    @property
    def inverse_diffusion(self) -> np.ndarray:
        return 1.0 / self.diffusion

    def restrict(self, cells) -> "CoefficientField":
        return CoefficientField(self.diffusion[cells], self.convection, self.reaction[cells])

    @classmethod
    def constant(cls, grid: StructuredGrid, diffusion=1.0, convection=(0.0, 0.0), reaction=0.0):
        n = grid.n_cells
        return cls(np.full((n, 2), float(diffusion)), np.asarray(convection, float), np.full(n, float(reaction)))


@dataclass(frozen=True)
class ChannelPattern:
    """Straight bands of constant width crossing the whole domain.

    ``axes`` contains ``"horizontal"`` (bands ``|y - center| <= half_width``)
    and/or ``"vertical"`` (bands ``|x - center| <= half_width``).
    """

    axes: frozenset
    centers: tuple
    half_width: float
    inside_value: float
    outside_value: float

    def __post_init__(self):
        object.__setattr__(self, "axes", frozenset(self.axes))
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        if not self.axes <= {"horizontal", "vertical"} or not self.axes:
            raise ValueError(f"invalid channel axes {sorted(self.axes)}")
        if not self.half_width > 0:
            raise ValueError("channel half width must be positive")

    def mask(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        centers = np.asarray(self.centers)
        inside = np.zeros(len(pts), dtype=bool)
        if "horizontal" in self.axes:
            inside |= np.any(np.abs(pts[:, 1, None] - centers) <= self.half_width, axis=1)
        if "vertical" in self.axes:
            inside |= np.any(np.abs(pts[:, 0, None] - centers) <= self.half_width, axis=1)
        return inside

    def sample(self, points) -> np.ndarray:
        return np.where(self.mask(points), self.inside_value, self.outside_value)

    def with_values(self, inside_value, outside_value) -> "ChannelPattern":
        return ChannelPattern(self.axes, self.centers, self.half_width, inside_value, outside_value)

    def check_within(self, rect) -> None:
        lo = np.asarray(self.centers) - self.half_width
        hi = np.asarray(self.centers) + self.half_width
        bounds = []
        if "horizontal" in self.axes:
            bounds.append((rect.y0, rect.y1))
        if "vertical" in self.axes:
            bounds.append((rect.x0, rect.x1))
        for a, b in bounds:
            if np.any(lo < a) or np.any(hi > b):
                raise ValueError("channels must lie within the oversampling domain")


def sample_coefficients(grid: StructuredGrid, diffusion=1.0, convection=(0.0, 0.0), reaction=0.0):
    """Cellwise coefficients from constants or channel patterns (cell-midpoint sampling)."""
    centers = grid.cell_centers

    def _sample(value):
        if isinstance(value, ChannelPattern):
            value.check_within(grid.rect)
            return value.sample(centers)
        return np.full(grid.n_cells, float(value))

    d = _sample(diffusion)
    return CoefficientField(np.column_stack([d, d]), np.asarray(convection, float), _sample(reaction))


def friedrichs_matrices(coeff: CoefficientField):
    """``(A0, A1, A2)``: ``A0`` per cell of shape ``(n_cells, 3, 3)``; ``A1``, ``A2`` constant."""
    b1, b2 = coeff.convection
    a0 = np.zeros((coeff.n_cells, 3, 3))
    a0[:, 0, 0] = coeff.inverse_diffusion[:, 0]
    a0[:, 1, 1] = coeff.inverse_diffusion[:, 1]
    a0[:, 2, 2] = coeff.reaction
    a1 = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, b1]])
    a2 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, b2]])
    return a0, a1, a2


def max_coefficient_matrix_norm(coeff: CoefficientField) -> float:
    """Largest max-row-sum norm of the first-order coefficient matrices ``A1``, ``A2``."""
    _, a1, a2 = friedrichs_matrices(coeff)
    return float(max(np.abs(a1).sum(axis=1).max(), np.abs(a2).sum(axis=1).max()))


@dataclass(frozen=True)
class PositivityReport:
    """Cellwise minima of the blocks of ``A0 + A0^T - div A``.

    ``diffusion_part`` is the smallest eigenvalue of ``2 D^{-1}``,
    ``reaction_part`` the smallest value of ``2 (c - div(b)/2)``.
    """

    diffusion_part: float
    reaction_part: float

    @property
    def minimum(self) -> float:
        return min(self.diffusion_part, self.reaction_part)

    @property
    def epsilon(self) -> float:
        return 0.5 * self.minimum

    @property
    def semi_definite(self) -> bool:
        return self.minimum == 0.0


def check_friedrichs_positivity(coeff: CoefficientField) -> PositivityReport:
    """Evaluate the positivity condition; ``epsilon == 0`` is reported, not rejected.

    Raises
    ------
    NegativeDefinite
        If either block has a negative value on some cell.
    """
    a0, a1, a2 = friedrichs_matrices(coeff)
    # constant convection: div A vanishes
    sym = a0 + np.swapaxes(a0, 1, 2)
    diffusion_part = float(np.linalg.eigvalsh(sym[:, :2, :2]).min())
    reaction_part = float(sym[:, 2, 2].min())
    report = PositivityReport(diffusion_part, reaction_part)
    if report.minimum < 0:
        raise NegativeDefinite(f"positivity violated: diffusion part {diffusion_part}, reaction part {reaction_part}")
    return report


def _gauss(n_points: int):
    x, w = np.polynomial.legendre.leggauss(n_points)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="ij")
    weights = np.outer(w, w)
    return xi.ravel(), eta.ravel(), weights.ravel()


def _cell_dofs(grid: StructuredGrid) -> np.ndarray:
    return np.hstack([grid.cell_edges, grid.n_edges + grid.cell_nodes])


def _check_sizes(grid, coeff):
    if coeff is not None and coeff.n_cells != grid.n_cells:
        raise SpaceMismatch(f"coefficient field has {coeff.n_cells} cells, grid has {grid.n_cells}")


def _operator_rows(grid: StructuredGrid, coeff: CoefficientField, xi, eta) -> np.ndarray:
    """Local action of ``A`` on the 8 cell DOFs at one reference point: ``(n_cells, 3, 8)``."""
    h = grid.h
    values, grads = q1_shape(xi, eta)
    grads = grads / h
    rt = rt0_shape(xi, eta)
    dinv = coeff.inverse_diffusion
    rows = np.zeros((grid.n_cells, 3, 8))
    rows[:, 0, :4] = dinv[:, :1] * rt[:, 0]
    rows[:, 1, :4] = dinv[:, 1:] * rt[:, 1]
    rows[:, 2, :4] = RT0_REFERENCE_DIVERGENCE / h
    rows[:, 0, 4:] = grads[:, 0]
    rows[:, 1, 4:] = grads[:, 1]
    rows[:, 2, 4:] = grads @ coeff.convection + coeff.reaction[:, None] * values
    return rows


def _weighted_value_rows(grid: StructuredGrid, inv_weight, xi, eta) -> np.ndarray:
    """Rows ``(W sigma_1, W sigma_2, u)`` for cellwise diagonal weights ``inv_weight``."""
    values, _ = q1_shape(xi, eta)
    rt = rt0_shape(xi, eta)
    rows = np.zeros((grid.n_cells, 3, 8))
    rows[:, 0, :4] = inv_weight[:, :1] * rt[:, 0]
    rows[:, 1, :4] = inv_weight[:, 1:] * rt[:, 1]
    rows[:, 2, 4:] = values
    return rows


def _assemble(grid: StructuredGrid, rows_at, n_gauss: int) -> sps.csr_matrix:
    local = np.zeros((grid.n_cells, 8, 8))
    for xi, eta, w in zip(*_gauss(n_gauss)):
        rows = rows_at(xi, eta)
        local += (w * grid.h ** 2) * np.einsum("cki,ckj->cij", rows, rows)
    dofs = _cell_dofs(grid)
    n = grid.n_edges + grid.n_nodes
    i = np.repeat(dofs, 8, axis=1).ravel()
    j = np.tile(dofs, (1, 8)).ravel()
    return sps.csr_matrix((local.ravel(), (i, j)), shape=(n, n))


def assemble_fosls(grid: StructuredGrid, coeff: CoefficientField, n_gauss: int = 2) -> sps.csr_matrix:
    """Least-squares stiffness ``K`` with ``v^T K u = (A u, A v)``."""
    _check_sizes(grid, coeff)
    return _assemble(grid, lambda xi, eta: _operator_rows(grid, coeff, xi, eta), n_gauss)


def assemble_fosls_load(grid: StructuredGrid, coeff: CoefficientField, f_scalar, n_gauss: int = 2) -> np.ndarray:
    """Right-hand side ``(f, A v)`` for the load ``(0, f_scalar)``, ``f_scalar`` cellwise constant."""
    _check_sizes(grid, coeff)
    f = np.broadcast_to(np.asarray(f_scalar, dtype=float), (grid.n_cells,))
    local = np.zeros((grid.n_cells, 8))
    for xi, eta, w in zip(*_gauss(n_gauss)):
        rows = _operator_rows(grid, coeff, xi, eta)
        local += (w * grid.h ** 2) * rows[:, 2, :] * f[:, None]
    out = np.zeros(grid.n_edges + grid.n_nodes)
    np.add.at(out, _cell_dofs(grid).ravel(), local.ravel())
    return out


def assemble_weighted_gram(grid: StructuredGrid, coeff: CoefficientField, n_gauss: int = 2) -> sps.csr_matrix:
    """Gram matrix of ``<(s,u),(t,v)>_w = (D^{-1}s, D^{-1}t) + (u, v)``."""
    _check_sizes(grid, coeff)
    dinv = coeff.inverse_diffusion
    return _assemble(grid, lambda xi, eta: _weighted_value_rows(grid, dinv, xi, eta), n_gauss)


def assemble_mass(grid: StructuredGrid, n_gauss: int = 2) -> sps.csr_matrix:
    """Plain L2 Gram matrix of the mixed space."""
    ones = np.ones((grid.n_cells, 2))
    return _assemble(grid, lambda xi, eta: _weighted_value_rows(grid, ones, xi, eta), n_gauss)


def flux_block_mask(space: MixedSpace) -> np.ndarray:
    mask = np.zeros(space.n_dofs, dtype=bool)
    mask[:space.n_flux] = True
    return mask


@dataclass(eq=False)
class OperatorMatrices:
    """FOSLS stiffness, weighted Gram and plain mass matrix on one grid."""

    stiffness: sps.csr_matrix
    weighted_gram: sps.csr_matrix
    mass: sps.csr_matrix
    space: MixedSpace = field(repr=False)

    @classmethod
    def assemble(cls, grid: StructuredGrid, coeff: CoefficientField) -> "OperatorMatrices":
        return cls(assemble_fosls(grid, coeff), assemble_weighted_gram(grid, coeff),
                   assemble_mass(grid), MixedSpace.on(grid))


def graph_norm(matrices: OperatorMatrices, f: MixedFunction) -> float:
    """``sqrt(||f||^2 + ||A f||^2)`` with unweighted L2 norms."""
    if f.space.grid is not matrices.space.grid:
        raise SpaceMismatch("function and matrices live on different grids")
    x = f.vector
    value = x @ (matrices.mass @ x) + x @ (matrices.stiffness @ x)
    return float(np.sqrt(max(value, 0.0)))


def interior_matrices(pair: SubdomainPair, coeff: CoefficientField) -> OperatorMatrices:
    """Matrices on the interior grid, with coefficients restricted from the oversampling grid."""
    return OperatorMatrices.assemble(pair.interior_grid, coeff.restrict(pair.interior_cells))
