"""Grid graphs and discrete differencing matrices on regular 2-D grids.

Field locations are flattened row-major: cell (row, col) maps to
``row * nx + col``. Adjacency pairs (edges) are enumerated in a fixed
order: all horizontal edges in a row-major scan, then all vertical
edges. Higher-order differences apply 1-D stencils along each grid
axis separately (rows first, then columns); no mixed-direction
stencils are built.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class GridError(ValueError):
    """Grid dimensions do not define a valid 2-D lattice."""


class OrderError(ValueError):
    """Differencing order unsupported for the grid's dimensions."""


# 1-D stencils for the k-th discrete difference.
_STENCILS = {
    1: (1.0, -1.0),
    2: (1.0, -2.0, 1.0),
    3: (1.0, -3.0, 3.0, -1.0),
}


@dataclass(frozen=True)
class GridGraph:
    """Regular nx-by-ny grid with its nearest-neighbor pair structure.

    ``edges[nu] = (i(nu), j(nu))`` lists every unordered nearest-neighbor
    pair exactly once, in flat row-major indices.
    """

    nx: int
    ny: int
    edges: tuple

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def m(self) -> int:
        return len(self.edges)

    def flat_index(self, row: int, col: int) -> int:
        return row * self.nx + col

    def row_col(self, idx: int) -> tuple:
        return divmod(idx, self.nx)

    def coords(self) -> np.ndarray:
        """Unit-square coordinates (x, y) per cell, shape (n, 2).

        x runs with the column index, y with the row index; both are
        rescaled to [0, 1].
        """
        rows, cols = np.divmod(np.arange(self.n), self.nx)
        x = cols / (self.nx - 1)
        y = rows / (self.ny - 1)
        return np.column_stack([x, y])

    def center_index(self) -> int:
        return self.flat_index(self.ny // 2, self.nx // 2)


@dataclass(frozen=True)
class DiffMatrix:
    """Sparse differencing matrix mapping a field to stencil values.

    For order 1 there is one row per grid edge with entries
    (+1, -1) at (i(nu), j(nu)); orders 2 and 3 stack per-axis rows
    with (1, -2, 1) and (1, -3, 3, -1) patterns.
    """

    matrix: sp.csr_matrix
    order: int

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def apply(self, field: np.ndarray) -> np.ndarray:
        return self.matrix @ field


def build_grid(nx: int, ny: int) -> GridGraph:
    """Enumerate the grid's unique nearest-neighbor pairs.

    Horizontal edges come first (row-major scan), then vertical edges,
    so edge counts satisfy m = ny*(nx-1) + nx*(ny-1).
    """
    if nx < 2 or ny < 2:
        raise GridError(f"grid must be at least 2x2, got {nx}x{ny}")
    edges = []
    for row in range(ny):
        base = row * nx
        for col in range(nx - 1):
            edges.append((base + col, base + col + 1))
    for row in range(ny - 1):
        base = row * nx
        for col in range(nx):
            edges.append((base + col, base + col + nx))
    return GridGraph(nx=nx, ny=ny, edges=tuple(edges))


def build_diff_matrix(grid: GridGraph, order: int = 1) -> DiffMatrix:
    """Build the discrete differencing matrix of the requested order.

    Order 1 rows follow ``grid.edges`` exactly (row nu has +1 at i(nu)
    and -1 at j(nu)). Orders 2 and 3 apply the 1-D stencil along every
    row and then along every column; each axis needs order+1 points.
    """
    if order not in _STENCILS:
        raise OrderError(f"differencing order must be 1, 2 or 3, got {order}")
    if min(grid.nx, grid.ny) < order + 1:
        raise OrderError(
            f"order-{order} differences need at least {order + 1} points "
            f"per axis, grid is {grid.nx}x{grid.ny}"
        )

    stencil = _STENCILS[order]
    width = len(stencil)
    rows, cols, vals = [], [], []
    r = 0

    if order == 1:
        for i, j in grid.edges:
            rows.extend((r, r))
            cols.extend((i, j))
            vals.extend((1.0, -1.0))
            r += 1
    else:
        # along rows (horizontal stencils), then along columns
        for row in range(grid.ny):
            base = row * grid.nx
            for col in range(grid.nx - width + 1):
                for k, w in enumerate(stencil):
                    rows.append(r)
                    cols.append(base + col + k)
                    vals.append(w)
                r += 1
        for col in range(grid.nx):
            for row in range(grid.ny - width + 1):
                for k, w in enumerate(stencil):
                    rows.append(r)
                    cols.append((row + k) * grid.nx + col)
                    vals.append(w)
                r += 1

    matrix = sp.csr_matrix(
        (vals, (rows, cols)), shape=(r, grid.n), dtype=np.float64
    )
    return DiffMatrix(matrix=matrix, order=order)
