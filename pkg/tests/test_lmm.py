import numpy as np
import pytest
from scipy import stats

from dppca.lmm import (
    LmmFit,
    LmmMcmc,
    LmmPriors,
    backwards_select,
    beta_conditional,
    centred_times,
    compare_groups,
    fit_lmm,
    intercept_conditional,
    lmm_log_joint,
    overlap,
    sigma2_conditional,
    tau2_conditional,
    time_design,
)

FAST = LmmMcmc(n_iterations=4000, thin=2, burn_in=500, seed=1)


def profiles(rng, n=20, M=8, beta=(0.0,), tau=0.5, sigma=1.0):
    X = time_design(M, len(beta) - 1)
    b = rng.normal(0, tau, n)
    return X @ np.asarray(beta) + b[:, None] + rng.normal(0, sigma, (n, M))


def test_centred_times():
    np.testing.assert_array_equal(centred_times(8), [-3.5, -2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5])
    np.testing.assert_array_equal(time_design(3, 2), [[1, -1, 1], [1, 0, 0], [1, 1, 1]])
    with pytest.raises(ValueError):
        time_design(4, 4)


def test_conditionals_match_joint(rng):
    pri = LmmPriors()
    for _ in range(50):
        n, M, d = rng.integers(3, 10), rng.integers(3, 9), rng.integers(0, 4)
        X = time_design(M, d)
        y = rng.normal(size=(n, M))
        beta, b = rng.normal(size=d + 1), rng.normal(size=n)
        tau2, sigma2 = rng.uniform(0.1, 2, 2)

        def joint(**kw):
            args = dict(beta=beta, b=b, tau2=tau2, sigma2=sigma2) | kw
            return lmm_log_joint(y, args["beta"], args["b"], args["tau2"], args["sigma2"], d, pri)

        beta2 = beta + rng.normal(size=d + 1)
        mean, cov = beta_conditional(y, b, sigma2, X, pri)
        mvn = stats.multivariate_normal(mean, cov)
        assert mvn.logpdf(beta2) - mvn.logpdf(beta) == pytest.approx(joint(beta=beta2) - joint(), abs=1e-8)

        b2 = b + rng.normal(size=n)
        mean, var = intercept_conditional(y, beta, tau2, sigma2, X)
        lc = lambda v: stats.norm.logpdf(v, mean, np.sqrt(var)).sum()  # noqa: E731
        assert lc(b2) - lc(b) == pytest.approx(joint(b=b2) - joint(), abs=1e-8)

        t2 = rng.uniform(0.1, 2)
        a, s = tau2_conditional(b, pri)
        ig = stats.invgamma(a, scale=s)
        assert ig.logpdf(t2) - ig.logpdf(tau2) == pytest.approx(joint(tau2=t2) - joint(), abs=1e-8)

        a, s = sigma2_conditional(y, beta, b, X, pri)
        ig = stats.invgamma(a, scale=s)
        assert ig.logpdf(t2) - ig.logpdf(sigma2) == pytest.approx(joint(sigma2=t2) - joint(), abs=1e-8)


def test_gibbs_matches_exact_fixed_effect_posterior():
    # with tau2 tiny and sigma2 known-ish the fixed effect is essentially OLS on the mean profile
    rng = np.random.default_rng(4)
    y = profiles(rng, n=200, beta=(1.0, 0.3), tau=1e-3, sigma=0.5)
    fit = fit_lmm(y, 1, mcmc=FAST)
    ols = np.linalg.lstsq(time_design(8, 1), y.mean(axis=0), rcond=None)[0]
    np.testing.assert_allclose(fit.beta_mean, ols, atol=0.01)


def test_trajectory_is_the_fitted_polynomial(rng):
    y = profiles(rng, beta=(2.0, 0.0, 0.2))
    fit = fit_lmm(y, 2, mcmc=FAST)
    np.testing.assert_allclose(fit.trajectory, time_design(8, 2) @ fit.beta_mean)
    assert fit.evolves_over_time


def test_selection_noise_and_quadratic():
    rng = np.random.default_rng(0)
    noise = backwards_select(profiles(rng), mcmc=FAST)
    assert noise.degree == 0 and noise.history == [3, 2, 1, 0]
    quad = backwards_select(profiles(rng, beta=(0.0, 0.0, 0.3)), mcmc=FAST)
    assert quad.degree == 2 and quad.history == [3, 2]
    assert quad.top_sign == 1


def test_fixed_effect_coverage():
    rng = np.random.default_rng(6)
    truth = np.array([1.0, -0.2, 0.1])
    hits = np.zeros(3)
    for r in range(10):
        fit = fit_lmm(profiles(rng, beta=truth), 2, mcmc=LmmMcmc(3000, 2, 500, seed=r))
        hits += (fit.beta_lower <= truth) & (truth <= fit.beta_upper)
    assert np.all(hits >= 8)


def test_deterministic():
    y = profiles(np.random.default_rng(1))
    a = fit_lmm(y, 1, mcmc=FAST)
    b = fit_lmm(y, 1, mcmc=FAST)
    np.testing.assert_array_equal(a.beta_mean, b.beta_mean)


def test_constant_profile_warns():
    with pytest.warns(UserWarning, match="all values equal"):
        fit = fit_lmm(np.ones((5, 4)), 0, mcmc=LmmMcmc(400, 1, 100))
    assert np.isfinite(fit.beta_mean).all()


def _fit(variable, degree, sign):
    beta = np.zeros(degree + 1)
    beta[-1] = sign
    return LmmFit(variable, degree, beta, beta - 0.1, beta + 0.1, (1, 0, 2), (1, 0, 2), np.zeros(4))


def test_compare_groups():
    a = [_fit("v1", 2, 1.0), _fit("v2", 0, 0.0), _fit("v3", 1, 1.0)]
    b = [_fit("v1", 2, -1.0), _fit("v3", 0, 0.0), _fit("v4", 1, -1.0)]
    rows = {r["variable"]: r for r in compare_groups(a, b, ("ctl", "trt"))}
    assert rows["v1"]["status"] == "both" and rows["v1"]["sign_discordant"]
    assert rows["v2"]["status"] == "neither" and rows["v2"]["in_trt"] is False
    assert rows["v3"]["status"] == "ctl"
    assert rows["v4"]["status"] == "trt" and rows["v4"]["degree_ctl"] is None
    assert overlap(list(rows.values())) == ["v1", "v3"]
