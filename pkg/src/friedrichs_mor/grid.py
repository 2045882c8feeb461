"""Structured square-cell grids on axis-aligned rectangles.

Enumeration conventions (fixed so that DOF vectors are reproducible):

* cells ``(i, j)`` with ``0 <= i < nx``, ``0 <= j < ny`` get index ``j*nx + i``;
* nodes ``(i, j)`` with ``0 <= i <= nx``, ``0 <= j <= ny`` get index ``j*(nx+1) + i``;
* horizontal edges come first: the edge from node ``(i, j)`` to ``(i+1, j)``
  has index ``j*nx + i``;
* vertical edges follow: the edge from node ``(i, j)`` to ``(i, j+1)`` has index
  ``nx*(ny+1) + j*(nx+1) + i``.

All orderings are row-major with x running fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from friedrichs_mor.exceptions import NonConformingResolution, NonPositiveMargin

_TILING_RTOL = 1e-9


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def inflate(self, delta: float) -> "Rect":
        return Rect(self.x0 - delta, self.y0 - delta, self.x1 + delta, self.y1 + delta)

    def contains(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and self.y0 <= other.y0
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    def distance_to_boundary(self, inner: "Rect") -> float:
        """Distance from ``inner`` to the boundary of ``self`` (``inner`` inside ``self``)."""
        return min(inner.x0 - self.x0, inner.y0 - self.y0,
                   self.x1 - inner.x1, self.y1 - inner.y1)


def _cell_count(length: float, h: float) -> int:
    ratio = length / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > _TILING_RTOL * max(ratio, 1.0):
        raise NonConformingResolution(f"h={h!r} does not tile length {length!r} (ratio {ratio!r})")
    return n


@dataclass(frozen=True, eq=False)
class StructuredGrid:
    """Uniform grid of ``nx`` by ``ny`` square cells of side ``h`` covering ``rect``."""

    rect: Rect
    nx: int
    ny: int
    h: float

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_horizontal_edges(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_vertical_edges(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_edges(self) -> int:
        return self.n_horizontal_edges + self.n_vertical_edges

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def cell_index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def horizontal_edge_index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def vertical_edge_index(self, i, j):
        return self.n_horizontal_edges + np.asarray(j) * (self.nx + 1) + np.asarray(i)

    @cached_property
    def node_coords(self) -> np.ndarray:
        j, i = np.divmod(np.arange(self.n_nodes), self.nx + 1)
        return np.column_stack([self.rect.x0 + i * self.h, self.rect.y0 + j * self.h])

    @cached_property
    def cell_ij(self) -> np.ndarray:
        j, i = np.divmod(np.arange(self.n_cells), self.nx)
        return np.column_stack([i, j])

    @cached_property
    def cell_origins(self) -> np.ndarray:
        """Lower-left corner of every cell."""
        return np.column_stack([self.rect.x0 + self.cell_ij[:, 0] * self.h,
                                self.rect.y0 + self.cell_ij[:, 1] * self.h])

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return self.cell_origins + 0.5 * self.h

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """Local node order ``(0,0), (1,0), (0,1), (1,1)`` in cell coordinates."""
        i, j = self.cell_ij.T
        return np.column_stack([self.node_index(i, j), self.node_index(i + 1, j),
                                self.node_index(i, j + 1), self.node_index(i + 1, j + 1)])

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """Local edge order: left, right, bottom, top."""
        i, j = self.cell_ij.T
        return np.column_stack([self.vertical_edge_index(i, j), self.vertical_edge_index(i + 1, j),
                                self.horizontal_edge_index(i, j), self.horizontal_edge_index(i, j + 1)])

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        jh, ih = np.divmod(np.arange(self.n_horizontal_edges), self.nx)
        jv, iv = np.divmod(np.arange(self.n_vertical_edges), self.nx + 1)
        horizontal = np.column_stack([self.rect.x0 + (ih + 0.5) * self.h, self.rect.y0 + jh * self.h])
        vertical = np.column_stack([self.rect.x0 + iv * self.h, self.rect.y0 + (jv + 0.5) * self.h])
        return np.vstack([horizontal, vertical])

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Boundary node indices counter-clockwise, starting at the bottom-left corner."""
        nx, ny = self.nx, self.ny
        bottom = self.node_index(np.arange(nx), 0)
        right = self.node_index(nx, np.arange(ny))
        top = self.node_index(np.arange(nx, 0, -1), ny)
        left = self.node_index(0, np.arange(ny, 0, -1))
        return np.concatenate([bottom, right, top, left]).astype(np.int64)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Cell index and local coordinates in ``[0,1]^2`` of physical points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - [self.rect.x0, self.rect.y0]) / self.h
        i = np.clip(np.floor(rel[:, 0]).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor(rel[:, 1]).astype(np.int64), 0, self.ny - 1)
        local = rel - np.column_stack([i, j])
        return self.cell_index(i, j), local


def build_grid(rect: Rect, h: float) -> StructuredGrid:
    """Tile ``rect`` with square cells of side ``h``.

    Raises
    ------
    NonConformingResolution
        If ``h`` does not divide both side lengths.
    """
    if h <= 0:
        raise NonConformingResolution(f"mesh width must be positive, got {h!r}")
    nx = _cell_count(rect.width, h)
    ny = _cell_count(rect.height, h)
    return StructuredGrid(rect=rect, nx=nx, ny=ny, h=float(h))


@dataclass(frozen=True, eq=False)
class SubdomainPair:
    """Target subdomain together with its oversampling domain.

    ``interior_cell_range`` holds the half-open index ranges
    ``((i_start, i_stop), (j_start, j_stop))`` of the oversampling cells
    covering the interior.
    """

    interior: Rect
    oversampling: Rect
    delta: float
    grid: StructuredGrid
    interior_grid: StructuredGrid
    interior_cell_range: tuple[tuple[int, int], tuple[int, int]]

    @property
    def margin_cells(self) -> int:
        return self.interior_cell_range[0][0]

    @cached_property
    def interior_cells(self) -> np.ndarray:
        """Oversampling cell indices of the interior cells, in interior enumeration order."""
        m = self.margin_cells
        i, j = self.interior_grid.cell_ij.T
        return self.grid.cell_index(i + m, j + m).astype(np.int64)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        m = self.margin_cells
        j, i = np.divmod(np.arange(self.interior_grid.n_nodes), self.interior_grid.nx + 1)
        return self.grid.node_index(i + m, j + m).astype(np.int64)

    @cached_property
    def interior_edges(self) -> np.ndarray:
        m = self.margin_cells
        ig = self.interior_grid
        jh, ih = np.divmod(np.arange(ig.n_horizontal_edges), ig.nx)
        jv, iv = np.divmod(np.arange(ig.n_vertical_edges), ig.nx + 1)
        return np.concatenate([self.grid.horizontal_edge_index(ih + m, jh + m),
                               self.grid.vertical_edge_index(iv + m, jv + m)]).astype(np.int64)


def build_pair(interior: Rect, delta: float, h: float) -> SubdomainPair:
    """Build the oversampling domain ``interior`` inflated by ``delta`` and its grid.

    Raises
    ------
    NonPositiveMargin
        If ``delta <= 0``.
    NonConformingResolution
        If ``h`` tiles neither the interior nor the margin.
    """
    if not delta > 0:
        raise NonPositiveMargin(f"oversampling margin must be positive, got {delta!r}")
    m = _cell_count(delta, h)
    interior_grid = build_grid(interior, h)
    oversampling = interior.inflate(delta)
    grid = build_grid(oversampling, h)
    cell_range = ((m, m + interior_grid.nx), (m, m + interior_grid.ny))
    return SubdomainPair(interior=interior, oversampling=oversampling, delta=float(delta), grid=grid,
                         interior_grid=interior_grid, interior_cell_range=cell_range)
