"""Orthogonalized model matrices and the rough-field precision Q.

The observation surface is decomposed as X*beta + Psi*y + H*gamma with
Psi = (I - P_X) M and H = (I - P_Psi)(I - P_X), so the fixed, smooth
and rough components occupy mutually orthogonal column spaces (up to
the small ridge used to invert Psi^T Psi). The rough field gets the
sparse precision Q = D^T diag(1/lambda2) D + E, where E is either a
single large anchor entry or a ridge, making Q invertible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .grid import DiffMatrix, GridGraph
from .linalg import TpsKernel

DEFAULT_ANCHOR_WEIGHT = 1e10


class DesignError(ValueError):
    """Design matrix is unusable (rank deficient or mis-shaped)."""


class AnchorError(ValueError):
    """Anchor specification cannot produce an invertible precision."""


@dataclass(frozen=True)
class AnchorSpec:
    """How to make the rough-field precision invertible.

    ``single`` mode adds ``weight`` to one diagonal entry (pinning that
    cell of the rough field to zero); ``ridge`` mode adds
    ``ridge_delta`` to the whole diagonal.
    """

    mode: str = "single"
    index: int = 0
    weight: float = DEFAULT_ANCHOR_WEIGHT
    ridge_delta: float = 1e-2

    def __post_init__(self):
        if self.mode not in ("single", "ridge"):
            raise AnchorError(f"anchor mode must be 'single' or 'ridge', got {self.mode!r}")
        if self.mode == "single" and self.weight <= 0:
            raise AnchorError("anchor weight must be positive")
        if self.mode == "ridge" and self.ridge_delta <= 0:
            raise AnchorError("ridge_delta must be positive")


def default_anchor(grid: GridGraph, weight: float = DEFAULT_ANCHOR_WEIGHT) -> AnchorSpec:
    """Single anchor at the grid's center cell."""
    return AnchorSpec(mode="single", index=grid.center_index(), weight=weight)


def default_design(grid: GridGraph) -> np.ndarray:
    """Design matrix [1, x, y] on unit-square coordinates."""
    coords = grid.coords()
    return np.column_stack([np.ones(grid.n), coords[:, 0], coords[:, 1]])


@dataclass
class ModelMatrices:
    """Design, basis and projection matrices of the orthogonalized model."""

    X: np.ndarray
    M: np.ndarray
    P_X: np.ndarray
    Psi: np.ndarray
    P_Psi: np.ndarray
    J: np.ndarray
    H: np.ndarray
    delta_ridge: float

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def orthogonalize(
    X: np.ndarray, kernel: TpsKernel, delta_ridge: float | None = None
) -> ModelMatrices:
    """Build the projection chain separating fixed, smooth and rough parts.

    ``delta_ridge`` regularizes the inversion of Psi^T Psi (Psi is rank
    deficient by construction); the default is 1e-8 times the mean
    diagonal of Psi^T Psi.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if kernel.M.shape[0] != n:
        raise DesignError(
            f"design has {n} rows but kernel factor is {kernel.M.shape[0]}"
        )
    if np.linalg.matrix_rank(X) < p:
        raise DesignError("design matrix is rank deficient")

    qx, _ = np.linalg.qr(X)
    P_X = qx @ qx.T
    eye = np.eye(n)
    Psi = (eye - P_X) @ kernel.M

    G = Psi.T @ Psi
    if delta_ridge is None:
        delta_ridge = 1e-8 * float(np.mean(np.diag(G)))
    core = sla.cho_factor(G + delta_ridge * eye, lower=True)
    P_Psi = Psi @ sla.cho_solve(core, Psi.T)
    J = sla.cho_solve(core, Psi.T @ (eye - P_X))
    H = (eye - P_Psi) @ (eye - P_X)
    return ModelMatrices(
        X=X, M=kernel.M, P_X=P_X, Psi=Psi, P_Psi=P_Psi, J=J, H=H,
        delta_ridge=float(delta_ridge),
    )


def build_Q(D: DiffMatrix, lambda2: np.ndarray, anchor: AnchorSpec) -> sp.csc_matrix:
    """Assemble Q = D^T diag(1/lambda2) D + E as a sparse matrix."""
    lambda2 = np.asarray(lambda2, dtype=np.float64)
    if lambda2.shape != (D.m,):
        raise ValueError(f"lambda2 must have length {D.m}, got {lambda2.shape}")
    if np.any(lambda2 <= 0):
        raise ValueError("all lambda2 entries must be positive")
    mat = D.matrix
    n = mat.shape[1]
    Q = (mat.T @ sp.diags(1.0 / lambda2) @ mat).tocsc()
    Q = 0.5 * (Q + Q.T)
    if anchor.mode == "single":
        if not 0 <= anchor.index < n:
            raise AnchorError(f"anchor index {anchor.index} outside [0, {n})")
        E = sp.coo_matrix(([anchor.weight], ([anchor.index], [anchor.index])), shape=(n, n))
        Q = (Q + E).tocsc()
    else:
        Q = (Q + anchor.ridge_delta * sp.eye(n, format="csc")).tocsc()
    return Q
