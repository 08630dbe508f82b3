import numpy as np
import pytest
import scipy.sparse as sp

from hybridsmooth.grid import build_diff_matrix, build_grid
from hybridsmooth.linalg import (
    NotSpdError,
    build_tps_kernel,
    sample_gaussian_precision,
    spd_factorize,
    tps_radial,
)
from hybridsmooth.model import AnchorSpec, build_Q


def test_identity_factor():
    f = spd_factorize(np.eye(4))
    assert np.array_equal(f.L, np.eye(4))


def test_grid_Q_factorizes_and_matches_dense_oracle():
    grid = build_grid(2, 2)
    D = build_diff_matrix(grid, 1)
    Q = build_Q(D, np.ones(D.m), AnchorSpec(mode="single", index=0, weight=1e10))
    f = spd_factorize(Q)
    L_oracle = np.linalg.cholesky(Q.toarray())
    assert np.allclose(f.L, L_oracle, rtol=1e-12, atol=1e-6)


def test_unanchored_Q_is_not_spd():
    grid = build_grid(2, 2)
    D = build_diff_matrix(grid, 1)
    Q = (D.matrix.T @ D.matrix).tocsc()
    with pytest.raises(NotSpdError):
        spd_factorize(Q)
    # sparse path hits the same error
    with pytest.raises(NotSpdError):
        spd_factorize(Q, dense_cutoff=1)


def test_not_spd_pivot_index():
    with pytest.raises(NotSpdError) as err:
        spd_factorize(np.diag([1.0, -2.0, 3.0]))
    assert err.value.pivot == 1
    with pytest.raises(NotSpdError) as err:
        spd_factorize(sp.csc_matrix(np.diag([1.0, -2.0, 3.0])), dense_cutoff=1)
    assert err.value.pivot == 1


def test_sparse_factor_reconstructs():
    grid = build_grid(4, 4)
    D = build_diff_matrix(grid, 1)
    rng = np.random.default_rng(0)
    lam2 = np.exp(rng.normal(size=D.m))
    Q = build_Q(D, lam2, AnchorSpec(mode="single", index=5, weight=1e4))
    f = spd_factorize(Q, dense_cutoff=1)  # force the sparse path
    assert f.perm is not None
    S = (f.L @ f.L.T).toarray()
    perm = f.perm
    A = Q.toarray()
    assert np.allclose(S[np.ix_(perm, perm)], A, rtol=1e-10, atol=1e-10 * np.abs(A).max())


def test_sparse_and_dense_solves_agree():
    grid = build_grid(4, 3)
    D = build_diff_matrix(grid, 1)
    Q = build_Q(D, np.full(D.m, 0.7), AnchorSpec(mode="ridge", ridge_delta=0.05))
    b = np.arange(Q.shape[0], dtype=float)
    xd = spd_factorize(Q).solve(b)
    xs = spd_factorize(Q, dense_cutoff=1).solve(b)
    assert np.allclose(xd, xs, rtol=1e-10)
    assert np.allclose(Q.toarray() @ xd, b, rtol=1e-9, atol=1e-9)


def test_sample_identity_zero_mean():
    f = spd_factorize(np.eye(3))
    rng = np.random.default_rng(42)
    draws = np.array([sample_gaussian_precision(f, np.zeros(3), rng) for _ in range(10_000)])
    assert np.abs(draws.mean(axis=0)).max() < 0.05


def test_sample_diagonal_moments():
    # A = diag(4), b = 4 -> mean 1, variance 1/4
    f = spd_factorize(np.diag([4.0, 4.0, 4.0]))
    rng = np.random.default_rng(1)
    draws = np.array(
        [sample_gaussian_precision(f, np.full(3, 4.0), rng) for _ in range(10_000)]
    )
    assert np.allclose(draws.mean(axis=0), 1.0, atol=0.02)
    assert np.allclose(draws.var(axis=0, ddof=1), 0.25, rtol=0.05)


def test_sample_tridiagonal_covariance_against_dense_inverse():
    A = np.diag([2.0, 2.5, 2.2]) + np.diag([-0.8, -0.6], 1) + np.diag([-0.8, -0.6], -1)
    f = spd_factorize(A)
    rng = np.random.default_rng(7)
    draws = np.array(
        [sample_gaussian_precision(f, np.zeros(3), rng) for _ in range(50_000)]
    )
    emp = np.cov(draws.T)
    oracle = np.linalg.inv(A)
    assert np.abs(emp - oracle).max() <= 0.05 * np.abs(oracle).max()


def test_precision_and_covariance_sampling_agree():
    # sampling from precision A matches direct draws from N(mu, A^{-1})
    rng = np.random.default_rng(3)
    B = rng.normal(size=(5, 5))
    A = B @ B.T + 5 * np.eye(5)
    b = rng.normal(size=5)
    cov = np.linalg.inv(A)
    mu = cov @ b
    f = spd_factorize(A)
    d1 = np.array([sample_gaussian_precision(f, b, rng) for _ in range(50_000)])
    d2 = rng.multivariate_normal(mu, cov, size=50_000, method="cholesky")
    # moment agreement at the 1% level: 2.58-sigma z-tests per coordinate
    se_mean = np.sqrt(np.diag(cov) / 50_000)
    assert np.all(np.abs(d1.mean(0) - d2.mean(0)) < 2.58 * np.sqrt(2) * se_mean)
    v1, v2 = d1.var(0, ddof=1), d2.var(0, ddof=1)
    se_var = np.sqrt(2.0 / 50_000) * np.diag(cov)
    assert np.all(np.abs(v1 - v2) < 2.58 * np.sqrt(2) * se_var)


def test_seed_determinism():
    A = np.diag([1.0, 2.0, 3.0])
    f = spd_factorize(A)
    d1 = sample_gaussian_precision(f, np.ones(3), np.random.default_rng(11))
    d2 = sample_gaussian_precision(f, np.ones(3), np.random.default_rng(11))
    assert np.array_equal(d1, d2)


def test_dimension_mismatch():
    f = spd_factorize(np.eye(3))
    with pytest.raises(ValueError):
        f.solve(np.ones(4))
    with pytest.raises(ValueError):
        sample_gaussian_precision(f, np.ones(2), np.random.default_rng(0))


def test_tps_radial_zero_at_origin():
    assert tps_radial(np.array([0.0]))[0] == 0.0
    r = np.array([0.0, 0.5, 1.0])
    vals = tps_radial(r)
    assert np.all(np.isfinite(vals))
    assert vals[2] == 0.0  # r^2 log r vanishes at r=1 too


@pytest.mark.parametrize("nx,ny", [(4, 4), (5, 5)])
def test_tps_kernel_properties(nx, ny):
    grid = build_grid(nx, ny)
    k = build_tps_kernel(grid, variance=0.5)
    K = k.K
    assert np.allclose(K, K.T, atol=1e-12)
    assert np.all(np.isfinite(np.diag(K)))
    w = np.linalg.eigvalsh(K)
    assert w.min() >= -1e-8 * w.max()
    # factor reconstructs K within 1e-8 relative
    err = np.abs(k.M @ k.M.T - K).max()
    assert err <= 1e-8 * np.abs(K).max()


def test_tps_kernel_scales_linearly_with_variance():
    grid = build_grid(5, 5)
    k1 = build_tps_kernel(grid, variance=0.5)
    k2 = build_tps_kernel(grid, variance=1.0)
    assert np.allclose(k2.K, 2.0 * k1.K, rtol=1e-12, atol=1e-14)
    assert np.isclose(np.max(np.diag(k2.K)), 2.0 * np.max(np.diag(k1.K)))


def test_tps_kernel_rejects_bad_variance():
    with pytest.raises(ValueError):
        build_tps_kernel(build_grid(3, 3), variance=0.0)
