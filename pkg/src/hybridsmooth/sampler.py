"""Gibbs sampler for the orthogonalized hybrid smoothing model.

The model for one or several grid realizations z_i is

    z_i ~ N(X beta + Psi y + H gamma, tau2 I)
    y   ~ N(J gamma, sigma2 I)
    gamma ~ N(0, Q(lambda2)^{-1})

with lambda2 governed by one of the scale-mixture priors. All full
conditionals are conjugate; a single realization is the n_members = 1
case of the ensemble formulas. Two speedups from the method are
implemented: partial updates (the expensive y/gamma draws run only
every ``partial_update_period`` iterations) and an adaptive burn-in
floor on lambda2 that decays geometrically and ends before burn-in.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .grid import DiffMatrix
from .linalg import NotSpdError, _dense_factor
from .model import AnchorSpec, ModelMatrices, build_Q
from .priors import DELTA_FLOOR, HorseshoePrior, ScalingPrior, update_lambda_posterior

MODES = ("hybrid", "tps", "mean")


class ChainError(RuntimeError):
    """A conditional draw failed; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class SamplerConfig:
    n_iter: int = 3000
    burn_in: int = 1000
    partial_update_period: int = 3
    floor_start: float = 1.0
    floor_decay: float | None = None  # default: reach delta_floor at floor_end
    floor_end: int | None = None  # default: burn_in // 2
    alpha_tau2: float = 0.001
    beta_tau2: float = 0.001
    alpha_sigma2: float = 0.001
    beta_sigma2: float = 0.001
    seed: int = 0
    thin: int = 1
    store_fields: bool = True
    fix_tau2: float | None = None
    delta_floor: float = DELTA_FLOOR

    def __post_init__(self):
        if self.n_iter <= 0 or not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.partial_update_period < 1:
            raise ValueError("partial_update_period must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.floor_end is None:
            # Ease the fusion brake off late in the burn-in: with partial
            # updates the rough field sees only a third of the iterations,
            # and a window ending at burn_in/2 lets the variances collapse
            # before the field has adapted (stuck-at-zero fits).
            self.floor_end = (9 * self.burn_in) // 10
        if not self.floor_end < max(self.burn_in, 1):
            raise ValueError("floor_end must come before burn_in")
        if self.floor_decay is None and self.floor_end > 0:
            self.floor_decay = (self.delta_floor / self.floor_start) ** (
                1.0 / self.floor_end
            )

    def floor_at(self, iteration: int) -> float | None:
        """Adaptive lambda2 floor for this iteration, or None once eased off."""
        if self.floor_end == 0 or iteration >= self.floor_end:
            return None
        return self.floor_start * self.floor_decay**iteration


@dataclass
class ChainState:
    beta: np.ndarray
    y_star: np.ndarray
    gamma: np.ndarray
    lambda2: np.ndarray
    tau2: float
    sigma2: float
    iteration: int = 0


@dataclass
class GibbsWorkspace:
    """Data plus precomputed matrices shared by every iteration.

    Holds the eigendecomposition of Psi^T Psi so the y draw costs
    O(n^2) per iteration, and the member-summed data products so the
    ensemble case costs the same as a single realization.
    """

    mats: ModelMatrices
    data: np.ndarray  # (n_members, n)
    D: DiffMatrix | None
    anchor: AnchorSpec | None
    mode: str
    XtX_chol: object = None
    G_w: np.ndarray = None
    G_V: np.ndarray = None
    HtH: np.ndarray = None
    JtJ: np.ndarray = None
    z_sum: np.ndarray = None
    Xt_zsum: np.ndarray = None
    Psit_zsum: np.ndarray = None
    Ht_zsum: np.ndarray = None

    def __post_init__(self):
        mats = self.mats
        self.XtX_chol = sla.cho_factor(mats.X.T @ mats.X, lower=True)
        G = mats.Psi.T @ mats.Psi
        w, V = np.linalg.eigh(0.5 * (G + G.T))
        self.G_w = np.clip(w, 0.0, None)
        self.G_V = V
        self.HtH = mats.H.T @ mats.H
        self.JtJ = mats.J.T @ mats.J
        self.z_sum = self.data.sum(axis=0)
        self.Xt_zsum = mats.X.T @ self.z_sum
        self.Psit_zsum = mats.Psi.T @ self.z_sum
        self.Ht_zsum = mats.H.T @ self.z_sum

    @property
    def n(self) -> int:
        return self.mats.n

    @property
    def p(self) -> int:
        return self.mats.p

    @property
    def n_members(self) -> int:
        return self.data.shape[0]


def make_workspace(
    data: np.ndarray,
    mats: ModelMatrices,
    D: DiffMatrix | None = None,
    anchor: AnchorSpec | None = None,
    mode: str = "hybrid",
) -> GibbsWorkspace:
    """Validate and bind data (single grid or stacked ensemble) to the model."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2 or data.shape[1] != mats.n:
        raise ValueError(f"data must be (members, {mats.n}) or ({mats.n},)")
    if mode == "hybrid" and (D is None or anchor is None):
        raise ValueError("hybrid mode needs a differencing matrix and an anchor")
    return GibbsWorkspace(mats=mats, data=data, D=D, anchor=anchor, mode=mode)


# --- individual conditional draws (exposed for verification) ---------------


def draw_beta_star(work: GibbsWorkspace, y_star, gamma, tau2, rng) -> np.ndarray:
    """beta | rest: N(A^{-1} b, A^{-1}) with A = n_members X^T X / tau2."""
    mats, m = work.mats, work.n_members
    b = (work.Xt_zsum - m * (mats.X.T @ (mats.Psi @ y_star + mats.H @ gamma))) / tau2
    mu = sla.cho_solve(work.XtX_chol, b) * (tau2 / m)
    z = rng.standard_normal(work.p)
    w = sla.solve_triangular(work.XtX_chol[0], z, lower=True, trans="T")
    return mu + math.sqrt(tau2 / m) * w


def draw_y_star(work: GibbsWorkspace, beta, gamma, tau2, sigma2, rng) -> np.ndarray:
    """y | rest: precision I/sigma2 + n_members Psi^T Psi / tau2, spectral draw."""
    mats, m = work.mats, work.n_members
    b = (
        work.Psit_zsum - m * (mats.Psi.T @ (mats.X @ beta + mats.H @ gamma))
    ) / tau2 + (mats.J @ gamma) / sigma2
    a = 1.0 / sigma2 + m * work.G_w / tau2
    tb = work.G_V.T @ b
    z = rng.standard_normal(work.n)
    return work.G_V @ (tb / a + z / np.sqrt(a))


def draw_gamma(
    work: GibbsWorkspace, beta, y_star, tau2, sigma2, Q, rng, iteration: int = 0
) -> np.ndarray:
    """gamma | rest with precision n_members H^T H / tau2 + Q + J^T J / sigma2."""
    mats, m = work.mats, work.n_members
    b = (
        work.Ht_zsum - m * (mats.H.T @ (mats.X @ beta + mats.Psi @ y_star))
    ) / tau2 + (mats.J.T @ y_star) / sigma2
    A = (m / tau2) * work.HtH + Q.toarray() + work.JtJ / sigma2
    try:
        factor = _dense_factor(A)
    except NotSpdError as exc:
        raise ChainError(f"gamma precision not SPD ({exc})", iteration) from exc
    z = rng.standard_normal(work.n)
    return factor.solve(b) + factor.sqrt_solve_t(z)


def tau2_conditional_params(work, resid_ss, cfg, prior=None):
    """Shape/rate of the inverse-gamma conditional for tau2.

    The horseshoe ties its top mixing layer to tau2, which adds 1/2 to
    the shape and 1/a to the rate.
    """
    shape = 0.5 * work.n_members * work.n + cfg.alpha_tau2
    rate = 0.5 * resid_ss + cfg.beta_tau2
    if isinstance(prior, HorseshoePrior):
        shape += 0.5
        rate += 1.0 / prior.a
    return shape, rate


def sigma2_conditional_params(work, y_star, gamma, cfg):
    """Shape/rate of the inverse-gamma conditional for sigma2."""
    resid = y_star - work.mats.J @ gamma
    return 0.5 * work.n + cfg.alpha_sigma2, 0.5 * float(resid @ resid) + cfg.beta_sigma2


def _draw_invgamma(shape, rate, rng) -> float:
    return float(rate / rng.gamma(shape))


def _check_finite(name: str, value, iteration: int):
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise ChainError(f"non-finite values after the {name} draw", iteration)


def gibbs_step(
    state: ChainState,
    work: GibbsWorkspace,
    prior: ScalingPrior | None,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> bool:
    """Advance the chain one full-conditional sweep, in place.

    Returns True when the expensive field draws (y, gamma) ran this
    iteration. In "tps" mode gamma and lambda2 are never updated; in
    "mean" mode y is frozen too, leaving a pure linear-model fit.
    """
    mats = work.mats
    it = state.iteration
    do_fields = it % cfg.partial_update_period == 0

    state.beta = draw_beta_star(work, state.y_star, state.gamma, state.tau2, rng)
    _check_finite("beta", state.beta, it)

    if do_fields and work.mode in ("hybrid", "tps"):
        state.y_star = draw_y_star(
            work, state.beta, state.gamma, state.tau2, state.sigma2, rng
        )
        _check_finite("y", state.y_star, it)

    did_gamma = False
    if do_fields and work.mode == "hybrid":
        Q = build_Q(work.D, state.lambda2, work.anchor)
        state.gamma = draw_gamma(
            work, state.beta, state.y_star, state.tau2, state.sigma2, Q, rng, it
        )
        _check_finite("gamma", state.gamma, it)
        did_gamma = True

    fit = mats.X @ state.beta + mats.Psi @ state.y_star + mats.H @ state.gamma
    resid_ss = float(np.sum((work.data - fit) ** 2))
    if cfg.fix_tau2 is not None:
        state.tau2 = cfg.fix_tau2
    else:
        shape, rate = tau2_conditional_params(work, resid_ss, cfg, prior)
        state.tau2 = _draw_invgamma(shape, rate, rng)
        _check_finite("tau2", state.tau2, it)

    shape, rate = sigma2_conditional_params(work, state.y_star, state.gamma, cfg)
    state.sigma2 = _draw_invgamma(shape, rate, rng)
    _check_finite("sigma2", state.sigma2, it)

    if work.mode == "hybrid":
        diffs = work.D.apply(state.gamma)
        state.lambda2 = update_lambda_posterior(
            prior, diffs, rng, floor_override=cfg.floor_at(it), tau2=state.tau2
        )
        _check_finite("lambda2", state.lambda2, it)

    state.iteration += 1
    return did_gamma


@dataclass
class Samples:
    """Stored post-burn-in draws plus run metadata."""

    beta: np.ndarray  # (T, p)
    tau2: np.ndarray  # (T,)
    sigma2: np.ndarray  # (T,)
    mu: np.ndarray  # (T, n) fitted mean draws
    gamma: np.ndarray | None  # (T, n)
    lambda2: np.ndarray | None  # (T, m_edges)
    n_gamma_draws: int
    seed: int
    mode: str
    nx: int | None = None
    ny: int | None = None

    @property
    def n_draws(self) -> int:
        return self.tau2.size

    def scalar_params(self) -> dict:
        out = {f"beta_{j}": self.beta[:, j] for j in range(self.beta.shape[1])}
        out["tau2"] = self.tau2
        out["sigma2"] = self.sigma2
        return out

    def summary(self) -> list:
        rows = []
        for name, draws in self.scalar_params().items():
            lo, hi = np.quantile(draws, [0.025, 0.975])
            rows.append(
                {
                    "parameter": name,
                    "mean": float(np.mean(draws)),
                    "sd": float(np.std(draws, ddof=1)) if draws.size > 1 else 0.0,
                    "q025": float(lo),
                    "q975": float(hi),
                    "ess": effective_sample_size(draws),
                }
            )
        return rows

    def gamma_mean(self) -> np.ndarray:
        if self.gamma is None:
            raise ValueError("no rough-field draws were stored")
        return self.gamma.mean(axis=0)

    def mu_mean(self) -> np.ndarray:
        return self.mu.mean(axis=0)

    def mu_sd(self) -> np.ndarray:
        return self.mu.std(axis=0, ddof=1)


def run_chain(
    data: np.ndarray,
    mats: ModelMatrices,
    D: DiffMatrix | None,
    anchor: AnchorSpec | None,
    prior: ScalingPrior | None,
    cfg: SamplerConfig,
    mode: str | None = None,
) -> Samples:
    """Run the Gibbs sampler and collect post-burn-in draws.

    ``prior=None`` selects the smooth-only baseline ("tps" mode) unless
    ``mode`` says otherwise. Deterministic given ``cfg.seed``.
    """
    if mode is None:
        mode = "hybrid" if prior is not None else "tps"
    if mode == "hybrid" and prior is None:
        raise ValueError("hybrid mode needs a scaling prior")
    work = make_workspace(data, mats, D, anchor, mode=mode)
    rng = np.random.default_rng(cfg.seed)

    n, p = work.n, work.p
    m_edges = D.m if (D is not None and mode == "hybrid") else 0
    state = ChainState(
        beta=np.zeros(p),
        y_star=np.zeros(n),
        gamma=np.zeros(n),
        lambda2=np.ones(m_edges) + cfg.delta_floor,
        tau2=1.0,
        sigma2=1.0,
    )

    kept = [
        t
        for t in range(cfg.n_iter)
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0
    ]
    T = len(kept)
    beta_draws = np.empty((T, p))
    tau2_draws = np.empty(T)
    sigma2_draws = np.empty(T)
    mu_draws = np.empty((T, n))
    gamma_draws = np.empty((T, n)) if (cfg.store_fields and mode == "hybrid") else None
    lambda2_draws = (
        np.empty((T, m_edges)) if (cfg.store_fields and mode == "hybrid") else None
    )

    keep_pos = {t: k for k, t in enumerate(kept)}
    n_gamma_draws = 0
    for t in range(cfg.n_iter):
        did_gamma = gibbs_step(state, work, prior, cfg, rng)
        n_gamma_draws += int(did_gamma)
        k = keep_pos.get(t)
        if k is not None:
            beta_draws[k] = state.beta
            tau2_draws[k] = state.tau2
            sigma2_draws[k] = state.sigma2
            mu_draws[k] = (
                mats.X @ state.beta + mats.Psi @ state.y_star + mats.H @ state.gamma
            )
            if gamma_draws is not None:
                gamma_draws[k] = state.gamma
            if lambda2_draws is not None:
                lambda2_draws[k] = state.lambda2

    return Samples(
        beta=beta_draws,
        tau2=tau2_draws,
        sigma2=sigma2_draws,
        mu=mu_draws,
        gamma=gamma_draws,
        lambda2=lambda2_draws,
        n_gamma_draws=n_gamma_draws,
        seed=cfg.seed,
        mode=mode,
    )


def estimate_edf(samples: Samples) -> float:
    """Covariance-based effective degrees of freedom of the fit.

    Sum over locations of the posterior variance of the fitted mean,
    divided by the posterior mean of tau2; reduces to the hat-matrix
    trace for linear-Gaussian smoothers.
    """
    if samples.n_draws < 100:
        raise ValueError("need at least 100 post-burn-in draws to estimate EDF")
    fit_var = samples.mu.var(axis=0, ddof=1)
    return float(np.sum(fit_var) / np.mean(samples.tau2))


def effective_sample_size(x: np.ndarray) -> float:
    """ESS from the initial-positive-sequence autocorrelation estimate."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var0 = float(x @ x) / n
    if var0 == 0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    rho = acov / acov[0]
    s = 0.0
    k = 1
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        s += pair
        k += 2
    return float(min(max(n / (1.0 + 2.0 * s), 1.0), n))
