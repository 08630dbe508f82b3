import numpy as np
import pytest
from scipy import stats

from hybridsmooth.priors import (
    CauchyPrior,
    CurveError,
    HorseshoePrior,
    LaplacePrior,
    NormalJeffreysPrior,
    ParetoPrior,
    _nj_inverse_transform,
    _pareto_lambda2_min,
    invgamma_draw,
    make_prior,
    simulate_lambda,
    thresholding_curve,
    update_lambda_posterior,
)

DELTA = 1e-12


# --- construction and validation -------------------------------------------


def test_registry_and_validation():
    assert isinstance(make_prior("nj"), NormalJeffreysPrior)
    assert isinstance(make_prior("lasso", b2=2.0), LaplacePrior)
    with pytest.raises(ValueError):
        make_prior("ridge")
    with pytest.raises(ValueError):
        LaplacePrior(b2=-1.0)
    with pytest.raises(ValueError):
        ParetoPrior(alpha=0.0)
    with pytest.raises(ValueError):
        NormalJeffreysPrior(log_lower=1.0, log_upper=0.0)


# --- forward simulation ------------------------------------------------------


def test_nj_inverse_transform_endpoints():
    lo, hi = np.log(1e-100), np.log(1e100)
    assert _nj_inverse_transform(0.0, lo, hi) == pytest.approx(1e-100, rel=1e-12)
    assert _nj_inverse_transform(1.0, lo, hi) == pytest.approx(1e100, rel=1e-12)


def test_nj_endpoints_through_simulate(monkeypatch):
    prior = NormalJeffreysPrior()

    class StubRng:
        def __init__(self, u):
            self.u = u

        def uniform(self, size=None):
            return np.full(size, self.u)

    low = simulate_lambda(prior, 3, StubRng(0.0))
    # the floor dominates the lower bound: lower + delta ~= delta
    assert np.allclose(low, 1e-100 + DELTA)
    high = simulate_lambda(prior, 3, StubRng(1.0))
    assert np.allclose(high, 1e100)


def test_nj_simulate_log_uniform():
    # bounds wide enough to show the law, narrow enough that the floor
    # does not distort the low end
    prior = NormalJeffreysPrior(log_lower=np.log(1e-6), log_upper=np.log(1e6))
    rng = np.random.default_rng(0)
    lam2 = simulate_lambda(prior, 10_000, rng)
    logs = np.log(lam2)
    ks = stats.kstest(logs, stats.uniform(loc=prior.log_lower,
                                          scale=prior.log_upper - prior.log_lower).cdf)
    assert ks.pvalue > 0.01


def test_laplace_simulate_mean():
    # rate b2/2 = 0.5 -> exponential mean 2
    prior = LaplacePrior(b2=1.0)
    rng = np.random.default_rng(1)
    lam2 = simulate_lambda(prior, 100_000, rng)
    assert abs(lam2.mean() - 2.0) < 0.05 * 2.0


def test_cauchy_simulate_matches_invgamma():
    prior = CauchyPrior(b2=2.0)
    rng = np.random.default_rng(2)
    lam2 = simulate_lambda(prior, 50_000, rng) - DELTA
    ks = stats.kstest(lam2, stats.invgamma(0.5, scale=1.0 / (2 * prior.b2)).cdf)
    assert ks.pvalue > 0.01


def test_pareto_simulate_matches_pareto():
    prior = ParetoPrior(alpha=1.7, lambda2_min=0.3)
    rng = np.random.default_rng(3)
    lam2 = simulate_lambda(prior, 50_000, rng) - DELTA
    assert lam2.min() >= prior.lambda2_min
    ks = stats.kstest(lam2, lambda x: 1.0 - (prior.lambda2_min / x) ** prior.alpha)
    assert ks.pvalue > 0.01


def test_horseshoe_simulate_positive_heavy():
    prior = HorseshoePrior(scale=1.0)
    rng = np.random.default_rng(4)
    lam2 = simulate_lambda(prior, 20_000, rng)
    assert np.all(lam2 >= DELTA)
    # half-Cauchy of half-Cauchy has no mean: spread over many decades
    assert np.log10(np.quantile(lam2, 0.99)) - np.log10(np.quantile(lam2, 0.01)) > 4


def test_all_simulated_lambda_at_least_floor():
    rng = np.random.default_rng(5)
    for prior in (LaplacePrior(), HorseshoePrior(), CauchyPrior(), ParetoPrior(),
                  NormalJeffreysPrior()):
        lam2 = simulate_lambda(prior, 1000, rng)
        assert np.all(lam2 >= prior.delta_floor)


# --- Gibbs conditional updates ----------------------------------------------


def test_invgamma_draw_matches_scipy():
    rng = np.random.default_rng(6)
    draws = invgamma_draw(2.5, 1.7, rng, size=100_000)
    ks = stats.kstest(draws, stats.invgamma(2.5, scale=1.7).cdf)
    assert ks.pvalue > 0.01


def test_nj_update_median_oracle():
    # diff^2 = 2 -> lambda*^2 ~ InverseGamma(1/2, 1)
    prior = NormalJeffreysPrior()
    rng = np.random.default_rng(7)
    diffs = np.full(100_000, np.sqrt(2.0))
    lam2 = update_lambda_posterior(prior, diffs, rng) - DELTA
    oracle_median = stats.invgamma(0.5, scale=1.0).median()
    assert abs(np.median(lam2) - oracle_median) < 0.02 * oracle_median


def test_nj_update_zero_diff_floors():
    prior = NormalJeffreysPrior()
    rng = np.random.default_rng(8)
    lam2 = update_lambda_posterior(prior, np.zeros(100), rng)
    assert np.all(lam2 == DELTA)


def test_lasso_update_inverse_gaussian_mean():
    prior = LaplacePrior(b2=3.0)
    rng = np.random.default_rng(9)
    d = 0.8
    diffs = np.full(100_000, d)
    lam2 = update_lambda_posterior(prior, diffs, rng, update_hyperparams=False)
    inv_lam = 1.0 / (lam2 - DELTA)
    mean_param = np.sqrt(prior.b2 / d**2)
    assert abs(inv_lam.mean() - mean_param) < 0.02 * mean_param
    # full distribution: InverseGaussian(mean, shape=b2)
    ks = stats.kstest(inv_lam, stats.invgauss(mean_param / prior.b2, scale=prior.b2).cdf)
    assert ks.pvalue > 0.01


def test_lasso_b2_update_is_conjugate_gamma():
    # replay oracle: the b2 draw must be Gamma(m, rate sum(lam*2)/2)
    prior = LaplacePrior(b2=2.0)
    m = 50
    diffs = np.abs(np.random.default_rng(10).normal(size=m))
    draws = []
    rates = []
    for k in range(20_000):
        prior.b2 = 2.0
        rng = np.random.default_rng(1000 + k)
        lam2 = update_lambda_posterior(prior, diffs, rng)
        rates.append(0.5 * np.sum(lam2 - DELTA))
        draws.append(prior.b2)
    draws, rates = np.array(draws), np.array(rates)
    # normalized by its rate, a Gamma(m, rate) draw is Gamma(m, 1)
    ks = stats.kstest(draws * rates, stats.gamma(m).cdf)
    assert ks.pvalue > 0.01


def test_cauchy_update_median_oracle():
    prior = CauchyPrior(b2=1.5)
    rng = np.random.default_rng(11)
    d = 1.2
    diffs = np.full(100_000, d)
    lam2 = update_lambda_posterior(prior, diffs, rng, update_hyperparams=False) - DELTA
    oracle = stats.invgamma(1.0, scale=0.5 * d**2 + 0.5 / prior.b2)
    assert abs(np.median(lam2) - oracle.median()) < 0.02 * oracle.median()
    assert stats.kstest(lam2, oracle.cdf).pvalue > 0.01


def test_pareto_update_truncated_invgamma():
    prior = ParetoPrior(alpha=1.3, lambda2_min=0.2)
    rng = np.random.default_rng(12)
    d = 1.0
    diffs = np.full(100_000, d)
    lam2 = update_lambda_posterior(prior, diffs, rng, update_hyperparams=False) - DELTA
    assert lam2.min() >= prior.lambda2_min
    base = stats.invgamma(1.0 + prior.alpha, scale=0.5 * d**2)
    lo_cdf = base.cdf(prior.lambda2_min)

    def trunc_cdf(x):
        return (base.cdf(x) - lo_cdf) / (1.0 - lo_cdf)

    assert stats.kstest(lam2, trunc_cdf).pvalue > 0.01


def test_pareto_lambda2_min_endpoint():
    # U = 1 recovers min(lambda*^2) exactly
    assert _pareto_lambda2_min(1.0, 10, 2.0, 0.37) == pytest.approx(0.37, rel=1e-12)


def test_pareto_hyper_updates_keep_support():
    prior = ParetoPrior(alpha=1.0, lambda2_min=0.1)
    rng = np.random.default_rng(13)
    for _ in range(200):
        diffs = rng.normal(size=30)
        lam2 = update_lambda_posterior(prior, diffs, rng)
        assert np.all(lam2 - DELTA >= prior.lambda2_min * (1 - 1e-12))
        assert prior.alpha > 0 and prior.lambda2_min > 0


def test_horseshoe_update_replay_wiring():
    """Every horseshoe layer must use the conjugate shape/rate wiring."""
    m = 6
    d = np.linspace(0.2, 1.4, m)
    tau2 = 0.37
    prior = HorseshoePrior()
    prior.v = np.full(m, 2.0)
    prior.t2, prior.a = 1.5, 0.8
    v0, t20, a0 = prior.v.copy(), prior.t2, prior.a
    seed = 99
    lam2 = update_lambda_posterior(prior, d, np.random.default_rng(seed), tau2=tau2)

    # replay the same rng stream with hand-built conditionals
    rng = np.random.default_rng(seed)
    lam_star = (0.5 * d**2 + 1.0 / v0) / rng.gamma(1.0, size=m)
    v = (1.0 / lam_star + 1.0 / t20) / rng.gamma(1.0, size=m)
    t2 = (np.sum(1.0 / v) + 1.0 / a0) / rng.gamma(0.5 * (m + 1))
    a = (1.0 / t2 + 1.0 / tau2) / rng.gamma(1.0)
    assert np.allclose(lam2, lam_star + DELTA, rtol=1e-12)
    assert np.allclose(prior.v, v, rtol=1e-12)
    assert prior.t2 == pytest.approx(t2, rel=1e-12)
    assert prior.a == pytest.approx(a, rel=1e-12)


def test_horseshoe_t2_conditional_mean():
    # shape (m+1)/2 > 1 for m >= 2: mean = rate / (shape - 1) within 2%
    m = 9
    v0 = np.linspace(0.5, 2.0, m)
    a0 = 1.3
    rate = np.sum(1.0 / v0) + 1.0 / a0
    shape = 0.5 * (m + 1)
    rng = np.random.default_rng(14)
    draws = invgamma_draw(shape, rate, rng, size=100_000)
    assert abs(draws.mean() - rate / (shape - 1)) < 0.02 * rate / (shape - 1)


def test_floor_override_clamps():
    prior = NormalJeffreysPrior()
    rng = np.random.default_rng(15)
    lam2 = update_lambda_posterior(prior, np.full(1000, 1e-6), rng, floor_override=0.5)
    assert np.all(lam2 >= 0.5)


@pytest.mark.parametrize(
    "prior",
    [LaplacePrior(), HorseshoePrior(), CauchyPrior(), ParetoPrior(lambda2_min=1e-6),
     NormalJeffreysPrior()],
)
def test_update_handles_zero_diffs(prior):
    rng = np.random.default_rng(16)
    lam2 = update_lambda_posterior(prior, np.zeros(50), rng)
    assert np.all(np.isfinite(lam2))
    assert np.all(lam2 >= prior.delta_floor)


# --- stationarity of the two-block Gibbs on one difference -------------------


def _toy_marginal(prior, analytic_cdf, seed, sweeps=50_000, thin=10):
    rng = np.random.default_rng(seed)
    diff = 0.1
    kept = []
    for t in range(sweeps):
        lam2 = update_lambda_posterior(
            prior, np.array([diff]), rng, update_hyperparams=False
        )[0]
        diff = np.sqrt(lam2) * rng.standard_normal()
        if t % thin == 0:
            kept.append(diff)
    return np.asarray(kept)


def test_laplace_mixture_stationary_law():
    # exponential mixing with b=1 gives Laplace(0, 1/b) differences
    draws = _toy_marginal(LaplacePrior(b2=1.0), None, seed=17)
    ks = stats.kstest(draws, stats.laplace(scale=1.0).cdf)
    assert ks.pvalue > 0.01


def test_cauchy_mixture_stationary_law():
    # inverse-gamma mixing with b=1 gives Cauchy(0, 1) differences
    draws = _toy_marginal(CauchyPrior(b2=1.0), None, seed=18)
    ks = stats.kstest(draws, stats.cauchy().cdf)
    assert ks.pvalue > 0.01


# --- thresholding curves ------------------------------------------------------


def test_curves_zero_at_zero():
    for prior in (LaplacePrior(), HorseshoePrior(), CauchyPrior(), ParetoPrior(),
                  NormalJeffreysPrior()):
        assert thresholding_curve(prior, [0.0])[0] == 0.0


def test_laplace_curve_is_soft_threshold():
    prior = LaplacePrior(b2=1.0)
    thetas = np.arange(3.0, 10.5, 0.5)
    curve = thresholding_curve(prior, thetas)
    soft = thetas - 1.0
    assert np.abs(curve - soft).max() < 0.05


def test_nj_curve_near_identity_for_large_theta():
    # the log-uniform mixture has marginal density ~ 1/|theta|, so the
    # exact curve is theta - 1/theta: within 0.1 of the identity at 10
    prior = NormalJeffreysPrior()
    thetas = np.array([5.0, 7.0, 10.0])
    curve = thresholding_curve(prior, thetas)
    assert abs(curve[-1] - 10.0) <= 0.1 + 1e-9  # analytic deviation is exactly 0.1
    assert np.allclose(curve, thetas - 1.0 / thetas, atol=1e-3)


def test_cauchy_curve_analytic_oracle():
    # IG(1/2, 1/(2 b^2)) mixing gives a Cauchy(0, 1/b) marginal:
    # curve = theta - 2 theta / (1/b^2 + theta^2)
    prior = CauchyPrior(b2=1.0)
    thetas = np.array([0.5, 1.0, 3.0, 8.0])
    curve = thresholding_curve(prior, thetas)
    oracle = thetas - 2 * thetas / (1.0 + thetas**2)
    assert np.allclose(curve, oracle, atol=1e-4)


@pytest.mark.parametrize(
    "prior",
    [LaplacePrior(), HorseshoePrior(), CauchyPrior(), ParetoPrior(),
     NormalJeffreysPrior()],
)
def test_curves_are_odd(prior):
    thetas = np.array([0.5, 1.0, 2.0, 5.0])
    pos = thresholding_curve(prior, thetas)
    neg = thresholding_curve(prior, -thetas)
    assert np.allclose(neg, -pos, atol=1e-6)
