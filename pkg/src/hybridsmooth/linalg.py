"""SPD factorization, Gaussian sampling from a precision matrix, TPS kernels.

Factorizations are dense Cholesky (LAPACK) below a size cutoff and a
SuperLU LDL^T in symmetric mode above it. Both expose the same solve
and sampling surface, and both are exact direct methods, so draws from
``N(A^{-1} b, A^{-1})`` are exact up to solver round-off. All sampling
is seed-deterministic: one draw consumes exactly n standard normals.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

# Above this dimension factorization switches to sparse LDL^T.
DENSE_CUTOFF = 600


class NotSpdError(ValueError):
    """Matrix is not symmetric positive definite.

    ``pivot`` is the index (original ordering) of the first
    non-positive pivot, or -1 when the solver aborted without
    reporting one.
    """

    def __init__(self, message: str, pivot: int = -1):
        super().__init__(message)
        self.pivot = pivot


class KernelError(RuntimeError):
    """TPS kernel construction failed to produce a usable factor."""


@dataclass
class SpdFactor:
    """Cholesky-type factor of an SPD matrix A.

    Dense path: ``L`` is the lower Cholesky factor, ``perm`` is None.
    Sparse path: ``L`` is the lower factor of the symmetrically permuted
    matrix, with ``A = (L L^T)[perm][:, perm]``.
    """

    n: int
    L: object
    perm: np.ndarray | None = None
    _lu: object = None

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {b.shape}")
        if self.perm is None:
            y = sla.solve_triangular(self.L, b, lower=True)
            return sla.solve_triangular(self.L, y, lower=True, trans="T")
        return self._lu.solve(b)

    def sqrt_solve_t(self, z: np.ndarray) -> np.ndarray:
        """Return x with x = A^{-1/2} z in the factor sense.

        Solves L^T w = z (undoing the permutation on the sparse path),
        so cov(x) = A^{-1} when z ~ N(0, I).
        """
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got {z.shape}")
        if self.perm is None:
            return sla.solve_triangular(self.L, z, lower=True, trans="T")
        w = spla.spsolve_triangular(self.L.T.tocsr(), z, lower=False)
        return w[self.perm]

    def logdet(self) -> float:
        """log det A."""
        if self.perm is None:
            d = np.diag(self.L)
        else:
            d = self.L.diagonal()
        return 2.0 * float(np.sum(np.log(d)))


def spd_factorize(A, dense_cutoff: int = DENSE_CUTOFF) -> SpdFactor:
    """Factor a symmetric positive definite matrix (dense or sparse).

    Raises NotSpdError (with the pivot index) when a non-positive pivot
    is met, which is also how rank-deficient precisions without an
    anchor surface.
    """
    if sp.issparse(A):
        n = A.shape[0]
        if n <= dense_cutoff:
            return _dense_factor(A.toarray())
        return _sparse_factor(A.tocsc())
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n <= dense_cutoff:
        return _dense_factor(A)
    return _sparse_factor(sp.csc_matrix(A))


# Pivots at or below this multiple of eps (relative to the diagonal entry)
# are rounding noise from a semidefinite matrix, not real positive pivots.
_PIVOT_RTOL = 8 * np.finfo(np.float64).eps


def _dense_factor(A: np.ndarray) -> SpdFactor:
    A = np.asarray(A, dtype=np.float64)
    c, info = lapack.dpotrf(A, lower=1)
    if info > 0:
        raise NotSpdError(
            f"matrix is not positive definite (pivot {info - 1})",
            pivot=info - 1,
        )
    if info < 0:
        raise ValueError(f"illegal argument to dpotrf: {info}")
    ratios = np.diag(c) ** 2 / np.diag(A)
    bad = np.flatnonzero(ratios <= _PIVOT_RTOL)
    if bad.size:
        k = int(bad[0])
        raise NotSpdError(
            f"matrix is numerically semidefinite (pivot {k})", pivot=k
        )
    return SpdFactor(n=A.shape[0], L=np.tril(c))


def _sparse_factor(A: sp.csc_matrix) -> SpdFactor:
    # LDL^T via SuperLU: symmetric mode with no diagonal pivoting keeps
    # the row and column permutations equal for SPD input.
    try:
        lu = spla.splu(
            A,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True, Equil=False),
        )
    except RuntimeError as exc:
        raise NotSpdError(f"sparse factorization failed: {exc}") from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotSpdError("pivoting occurred; matrix is not SPD")
    d = lu.U.diagonal()
    inv_perm = np.argsort(lu.perm_c)
    diag_orig = A.diagonal()[inv_perm]
    bad = np.flatnonzero((d <= 0) | (d <= _PIVOT_RTOL * diag_orig))
    if bad.size:
        k = int(bad[0])
        pivot = int(inv_perm[k])
        raise NotSpdError(
            f"matrix is not positive definite (pivot {pivot})", pivot=pivot
        )
    L = (lu.L @ sp.diags(np.sqrt(d))).tocsc()
    return SpdFactor(n=A.shape[0], L=L, perm=np.asarray(lu.perm_c), _lu=lu)


def sample_gaussian_precision(
    factor: SpdFactor, b: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One draw from N(A^{-1} b, A^{-1}) given a factor of A."""
    mean = factor.solve(b)
    z = rng.standard_normal(factor.n)
    return mean + factor.sqrt_solve_t(z)


def tps_radial(r: np.ndarray) -> np.ndarray:
    """Thin-plate radial function r^2 log r with the value 0 at r = 0."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] ** 2 * np.log(r[pos])
    return out


@dataclass
class TpsKernel:
    """Dense TPS covariance on unit-square grid coordinates.

    ``K`` is the radial kernel projected off the linear polynomial
    space, floored to PSD, normalized to unit mean diagonal and scaled
    by ``variance``; ``M`` is its lower Cholesky factor (computed with
    a relative jitter of 1e-9 on the diagonal so the projected,
    rank-deficient K factors).
    """

    coords: np.ndarray
    K: np.ndarray
    M: np.ndarray
    variance: float


def build_tps_kernel(grid, variance: float = 1.0) -> TpsKernel:
    """Build the dense TPS covariance and its factor for a grid.

    The raw kernel r^2 log r is conditionally positive definite with
    respect to [1, x, y], so it is projected onto the orthogonal
    complement of that span, negative eigenvalues (numerical noise) are
    clipped to zero, and the result is normalized to mean diagonal 1
    before scaling by ``variance``.
    """
    if variance <= 0:
        raise ValueError("variance must be positive")
    coords = grid.coords()
    diff = coords[:, None, :] - coords[None, :, :]
    r = np.sqrt(np.sum(diff**2, axis=-1))
    K0 = tps_radial(r)

    X = np.column_stack([np.ones(len(coords)), coords[:, 0], coords[:, 1]])
    qx, _ = np.linalg.qr(X)
    proj = np.eye(len(coords)) - qx @ qx.T
    K1 = proj @ K0 @ proj
    K1 = 0.5 * (K1 + K1.T)

    w, V = np.linalg.eigh(K1)
    if w.max() <= 0:
        raise KernelError("projected TPS kernel has no positive eigenvalues")
    w = np.clip(w, 0.0, None)
    K = (V * w) @ V.T
    K = 0.5 * (K + K.T)
    K *= variance / np.mean(np.diag(K))

    jitter = 1e-9 * np.max(np.diag(K))
    try:
        M = np.linalg.cholesky(K + jitter * np.eye(len(K)))
    except np.linalg.LinAlgError as exc:
        raise KernelError(f"TPS kernel factorization failed: {exc}") from exc
    return TpsKernel(coords=coords, K=K, M=M, variance=float(variance))
