import itertools

import numpy as np
import pytest

from hybridsmooth.grid import GridError, OrderError, build_diff_matrix, build_grid


def brute_force_neighbor_pairs(nx, ny):
    """Independent enumeration of unordered nearest-neighbor pairs."""
    pairs = set()
    for a, b in itertools.combinations(range(nx * ny), 2):
        ra, ca = divmod(a, nx)
        rb, cb = divmod(b, nx)
        if abs(ra - rb) + abs(ca - cb) == 1:
            pairs.add((min(a, b), max(a, b)))
    return pairs


def test_2x2_edges_exhaustive():
    grid = build_grid(2, 2)
    assert grid.m == 4
    assert set(tuple(sorted(e)) for e in grid.edges) == {(0, 1), (2, 3), (0, 2), (1, 3)}


def test_degenerate_dimension_rejected():
    with pytest.raises(GridError):
        build_grid(3, 1)
    with pytest.raises(GridError):
        build_grid(1, 5)


def test_3x3_edge_count_formula_and_brute_force():
    grid = build_grid(3, 3)
    assert grid.m == 12
    assert grid.m == 3 * (3 - 1) + 3 * (3 - 1)
    assert set(tuple(sorted(e)) for e in grid.edges) == brute_force_neighbor_pairs(3, 3)


@pytest.mark.parametrize("nx,ny", [(2, 2), (3, 4), (5, 3)])
def test_edge_count_and_uniqueness(nx, ny):
    grid = build_grid(nx, ny)
    assert grid.m == nx * (ny - 1) + ny * (nx - 1)
    assert len(set(tuple(sorted(e)) for e in grid.edges)) == grid.m
    assert all(0 <= i < grid.n and 0 <= j < grid.n for i, j in grid.edges)
    assert grid.m == len(brute_force_neighbor_pairs(nx, ny))


def test_flat_index_round_trip():
    grid = build_grid(4, 3)
    for row in range(3):
        for col in range(4):
            assert grid.row_col(grid.flat_index(row, col)) == (row, col)


def test_order1_rows_are_signed_pairs():
    grid = build_grid(3, 2)
    D = build_diff_matrix(grid, 1)
    dense = D.matrix.toarray()
    for nu, (i, j) in enumerate(grid.edges):
        row = dense[nu]
        assert row[i] == 1.0 and row[j] == -1.0
        assert np.count_nonzero(row) == 2


@pytest.mark.parametrize("order,nx,ny", [(1, 3, 2), (2, 4, 4), (3, 4, 5)])
def test_row_sums_zero(order, nx, ny):
    D = build_diff_matrix(build_grid(nx, ny), order)
    ones = np.ones(nx * ny)
    assert np.abs(D.matrix @ ones).max() == 0.0


def test_order2_stencil_pattern():
    grid = build_grid(4, 3)
    D = build_diff_matrix(grid, 2)
    dense = D.matrix.toarray()
    # first horizontal row covers cells 0,1,2 of the top row
    row = dense[0]
    assert row[0] == 1.0 and row[1] == -2.0 and row[2] == 1.0
    assert np.count_nonzero(row) == 3


def test_order3_stencil_pattern():
    grid = build_grid(4, 4)
    D = build_diff_matrix(grid, 3)
    row = D.matrix.toarray()[0]
    assert list(row[:4]) == [1.0, -3.0, 3.0, -1.0]
    assert np.count_nonzero(row) == 4


def test_order_too_high_for_axis():
    with pytest.raises(OrderError):
        build_diff_matrix(build_grid(2, 2), 2)
    with pytest.raises(OrderError):
        build_diff_matrix(build_grid(3, 3), 3)
    with pytest.raises(OrderError):
        build_diff_matrix(build_grid(4, 4), 4)


@pytest.mark.parametrize("nx,ny", [(2, 2), (3, 3), (4, 4), (3, 4)])
def test_DtD_is_graph_laplacian(nx, ny):
    grid = build_grid(nx, ny)
    D = build_diff_matrix(grid, 1)
    # brute-force degree-minus-adjacency construction
    n = grid.n
    adj = np.zeros((n, n))
    for i, j in brute_force_neighbor_pairs(nx, ny):
        adj[i, j] = adj[j, i] = 1.0
    lap = np.diag(adj.sum(axis=1)) - adj
    got = (D.matrix.T @ D.matrix).toarray()
    assert np.array_equal(got, lap)
    # constant lambda2 = c scales the Laplacian by 1/c
    c = 2.5
    scaled = (D.matrix.T @ (np.eye(D.m) / c) @ D.matrix)
    assert np.allclose(scaled, lap / c, atol=1e-14)


@pytest.mark.parametrize("nx,ny", [(2, 2), (3, 3), (4, 3)])
def test_order1_rank_deficiency_is_one(nx, ny):
    D = build_diff_matrix(build_grid(nx, ny), 1)
    assert np.linalg.matrix_rank(D.matrix.toarray()) == nx * ny - 1


def test_coords_unit_square():
    grid = build_grid(5, 3)
    coords = grid.coords()
    assert coords.min() == 0.0 and coords.max() == 1.0
    assert coords.shape == (15, 2)
    # x follows the column index
    assert coords[1, 0] == 0.25 and coords[1, 1] == 0.0
