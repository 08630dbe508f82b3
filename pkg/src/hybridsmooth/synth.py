"""Synthetic fields: rough-field simulation and study datasets.

Rough (non-Gaussian) fields are simulated by drawing the edge
variances from a scaling prior, assembling the anchored precision
Q(lambda2) and solving the transposed Cholesky system against white
noise, so the field has covariance Q^{-1} without ever forming it.
Study datasets combine a TPS-kernel Gaussian field, a scaled plateau
template with coastline-like boundaries, and i.i.d. noise.

The default template is a fixed 20x20 asset shipped with the package
(regenerable via ``coastline_template``); its zero plateau covers the
grid center so the default rough-field anchor pins a truly-zero cell.
"""

import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .grid import GridGraph, build_diff_matrix
from .linalg import build_tps_kernel, spd_factorize
from .model import AnchorSpec, build_Q, default_anchor
from .priors import ScalingPrior, simulate_lambda

CANONICAL_MAGNITUDES = (0.5, 1.0, 2.0, 4.0)
CANONICAL_NOISE = (0.001, 0.01, 0.1)

_DEFAULT_TEMPLATE_CACHE = {}


def coastline_template(nx: int = 20, ny: int = 20) -> np.ndarray:
    """Plateau map with values {0,1,2,3} and wiggly, coast-like borders.

    Regions: open "ocean" at 0 (covering the grid center), a southern
    landmass at 1, a western landmass at 2 and a lobed island at 3.
    """
    rows = np.arange(ny)[:, None] / (ny - 1)
    cols = np.arange(nx)[None, :] / (nx - 1)
    vals = np.zeros((ny, nx))
    coast_n = (
        0.70
        + 0.09 * np.sin(2 * np.pi * 1.3 * cols + 0.7)
        + 0.04 * np.sin(2 * np.pi * 3.1 * cols)
    )
    vals[rows > coast_n] = 1.0
    coast_w = (
        0.24
        + 0.08 * np.sin(2 * np.pi * 1.1 * rows + 2.1)
        + 0.03 * np.sin(2 * np.pi * 2.7 * rows + 0.4)
    )
    west = (cols < coast_w) & (rows <= coast_n)
    vals[west] = 2.0
    ang = np.arctan2(rows - 0.22, cols - 0.78)
    radius = 0.16 + 0.05 * np.sin(3 * ang + 0.9)
    island = ((cols - 0.78) ** 2 + (rows - 0.22) ** 2) < radius**2
    vals[island] = 3.0
    return vals


def default_template(nx: int = 20, ny: int = 20) -> np.ndarray:
    """The versioned 20x20 template asset, nearest-neighbor resampled if needed."""
    key = (nx, ny)
    if key not in _DEFAULT_TEMPLATE_CACHE:
        ref = resources.files("hybridsmooth.data") / "rough_template_20x20.csv"
        with resources.as_file(ref) as path:
            base = np.loadtxt(path, delimiter=",")
        if (ny, nx) != base.shape:
            ri = np.round(np.arange(ny) * (base.shape[0] - 1) / (ny - 1)).astype(int)
            ci = np.round(np.arange(nx) * (base.shape[1] - 1) / (nx - 1)).astype(int)
            base = base[np.ix_(ri, ci)]
        _DEFAULT_TEMPLATE_CACHE[key] = base
    return _DEFAULT_TEMPLATE_CACHE[key].copy()


def sample_field_given_lambda(
    grid: GridGraph,
    lambda2: np.ndarray,
    noise: np.ndarray,
    anchor: AnchorSpec | None = None,
    order: int = 1,
) -> np.ndarray:
    """Field with covariance Q(lambda2)^{-1} applied to the given white noise."""
    D = build_diff_matrix(grid, order)
    if anchor is None:
        anchor = default_anchor(grid)
    Q = build_Q(D, lambda2, anchor)
    factor = spd_factorize(Q)
    return factor.sqrt_solve_t(np.asarray(noise, dtype=np.float64))


def simulate_ngp_field(
    grid: GridGraph,
    prior: ScalingPrior,
    rng: np.random.Generator,
    shared_noise: np.ndarray | None = None,
    anchor: AnchorSpec | None = None,
    order: int = 1,
    lambda2_clip: tuple = (1e-6, 1e6),
) -> np.ndarray:
    """Simulate a rough field: draw lambda2 from the prior, then the GMRF.

    Passing ``shared_noise`` holds the white-noise vector fixed across
    calls so fields from different priors differ only through Q.

    The drawn variances are clipped into ``lambda2_clip`` before Q is
    assembled: heavy-tailed scaling laws (log-uniform most of all)
    produce variance ratios far beyond what a float64 factorization of
    Q can represent, and contrasts above ~1e12 are indistinguishable in
    the simulated field anyway.
    """
    D = build_diff_matrix(grid, order)
    lam2 = np.clip(simulate_lambda(prior, D.m, rng), *lambda2_clip)
    noise = rng.standard_normal(grid.n) if shared_noise is None else shared_noise
    return sample_field_given_lambda(grid, lam2, noise, anchor=anchor, order=order)


def step_structure_ratio(grid: GridGraph, field: np.ndarray) -> float:
    """median |adjacent diff| over its 95th percentile; small means plateaus."""
    D = build_diff_matrix(grid, 1)
    adiff = np.abs(D.apply(np.asarray(field, dtype=np.float64)))
    q95 = float(np.quantile(adiff, 0.95))
    if q95 == 0:
        return 0.0
    return float(np.median(adiff)) / q95


@dataclass
class SyntheticField:
    """A study dataset and its true components (all row-major flattened)."""

    z: np.ndarray  # (n,) or (members, n)
    gamma: np.ndarray  # (n,) true rough component
    y: np.ndarray  # (n,) true smooth component
    eps: np.ndarray  # same shape as z
    grid: GridGraph
    magnitude: float
    tau2: float


def make_synthetic(
    grid: GridGraph,
    magnitude: float,
    tau2: float,
    rng: np.random.Generator,
    members: int | None = None,
    gp_variance: float = 0.5,
    template: np.ndarray | None = None,
) -> SyntheticField:
    """Build z = y + magnitude * template + noise on the grid.

    The smooth part is one TPS-kernel Gaussian field draw with spatial
    variance ``gp_variance``; the rough part scales the plateau
    template so unit magnitude gives unit steps. With ``members`` set,
    that many noisy realizations share the same y and gamma.
    """
    if tau2 < 0:
        raise ValueError("tau2 must be nonnegative")
    if magnitude and magnitude not in CANONICAL_MAGNITUDES:
        warnings.warn(
            f"magnitude {magnitude} is outside the canonical study levels "
            f"{CANONICAL_MAGNITUDES}",
            stacklevel=2,
        )
    if tau2 and tau2 not in CANONICAL_NOISE:
        warnings.warn(
            f"tau2 {tau2} is outside the canonical study levels {CANONICAL_NOISE}",
            stacklevel=2,
        )
    if template is None:
        template = default_template(grid.nx, grid.ny)
    if template.shape != (grid.ny, grid.nx):
        raise ValueError(
            f"template shape {template.shape} does not match grid "
            f"({grid.ny}, {grid.nx})"
        )
    kernel = build_tps_kernel(grid, variance=gp_variance)
    y = kernel.M @ rng.standard_normal(grid.n)
    gamma = magnitude * template.reshape(-1)
    shape = (members, grid.n) if members else (grid.n,)
    eps = np.sqrt(tau2) * rng.standard_normal(shape)
    z = (y + gamma) + eps
    return SyntheticField(
        z=z, gamma=gamma, y=y, eps=eps, grid=grid,
        magnitude=float(magnitude), tau2=float(tau2),
    )
