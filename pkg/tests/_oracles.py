"""Independent oracles shared by the unit tests and the acceptance checks.

Everything here is checked against :func:`dppca.sampler.log_joint`, which is
written directly from the model densities and shares no code with the
conditional updates beyond the AR(1) density.
"""

from __future__ import annotations

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from dppca.data import PriorConfig
from dppca.sampler import (
    ModelState,
    gaussian_logpdf_prec,
    loading_conditional,
    log_joint,
    log_volatility_log_target,
    persistence_log_target,
    residual_ss,
    score_conditional,
    site_prior,
    sv_innovation_conditional,
    sv_mean_conditional,
    update_log_volatility_sites,
    update_persistence_mh,
    update_sv_innovation_var,
    update_sv_mean,
)
from dppca.simulate import simulate_dppca

CONSISTENCY_BLOCKS = ("W", "U", "nu", "mu", "v2", "V", "phi", "Phi", "eta", "lambda")


def random_state(rng, n=6, M=5, p=4, q=2) -> ModelState:
    return ModelState(
        W=rng.normal(size=(M, p, q)),
        U=rng.normal(size=(M, n, q)),
        eta=rng.normal(-0.5, 0.5, size=M),
        lam=rng.normal(0.0, 0.5, size=(M, q)),
        nu=float(rng.normal()),
        phi=float(rng.uniform(-0.9, 0.9)),
        v2=float(rng.uniform(0.05, 1.0)),
        mu=rng.normal(size=q),
        Phi=rng.uniform(-0.9, 0.9, size=q),
        V=rng.uniform(0.05, 1.0, size=q),
    )


def _block_log_conditional(block, s: ModelState, X, prior: PriorConfig, site=None):
    """Log full conditional of ``block`` at its value in ``s`` (up to a constant)."""
    if block == "W":
        mean, P = loading_conditional(s, X, prior)
        return gaussian_logpdf_prec(s.W, mean, P)
    if block == "U":
        mean, P = score_conditional(s, X)
        return gaussian_logpdf_prec(s.U, mean, P)
    if block in ("nu", "mu"):
        path, val = (s.eta[:, None], s.nu) if block == "nu" else (s.lam, s.mu)
        phi, v2 = (s.phi, s.v2) if block == "nu" else (s.Phi, s.V)
        m0, v0 = (prior.nu_mean, prior.nu_var) if block == "nu" else (prior.mu_mean, prior.mu_var)
        mean, var = sv_mean_conditional(path, phi, v2, m0, v0)
        return float(stats.norm.logpdf(val, mean, np.sqrt(var)).sum())
    if block in ("v2", "V"):
        path, center, phi, val = (
            (s.eta[:, None], s.nu, s.phi, s.v2) if block == "v2" else (s.lam, s.mu, s.Phi, s.V)
        )
        shape, scale = sv_innovation_conditional(path, center, phi, prior.ig_alpha, prior.ig_beta)
        return float(stats.invgamma.logpdf(val, shape, scale=scale).sum())
    if block in ("phi", "Phi"):
        path, center, v2, val = (
            (s.eta[:, None], s.nu, s.v2, s.phi) if block == "phi" else (s.lam, s.mu, s.V, s.Phi)
        )
        return float(np.sum(persistence_log_target(val, path, center, v2, prior.phi_mean, prior.phi_var)))
    if block == "eta":
        n, p = X.shape[1], X.shape[2]
        mean, prec = site_prior(s.eta[:, None], [site], s.nu, s.phi, s.v2)
        ss = residual_ss(s, X)[site]
        return float(log_volatility_log_target(s.eta[site], n * p, ss, mean[0, 0], prec[0, 0]))
    if block == "lambda":
        m, j = site
        n = X.shape[1]
        mean, prec = site_prior(s.lam[:, [j]], [m], s.mu[j], s.Phi[j], s.V[j])
        ss = (s.U[m, :, j] ** 2).sum()
        return float(log_volatility_log_target(s.lam[m, j], n, ss, mean[0, 0], prec[0, 0]))
    raise ValueError(block)


def _perturb(block, s: ModelState, rng, site=None) -> ModelState:
    t = s.copy()
    if block == "W":
        t.W = t.W + rng.normal(scale=0.3, size=t.W.shape)
    elif block == "U":
        t.U = t.U + rng.normal(scale=0.3, size=t.U.shape)
    elif block == "nu":
        t.nu += rng.normal()
    elif block == "mu":
        t.mu = t.mu + rng.normal(size=t.mu.shape)
    elif block == "v2":
        t.v2 = float(rng.uniform(0.05, 1.0))
    elif block == "V":
        t.V = rng.uniform(0.05, 1.0, size=t.V.shape)
    elif block == "phi":
        t.phi = float(rng.uniform(-0.95, 0.95))
    elif block == "Phi":
        t.Phi = rng.uniform(-0.95, 0.95, size=t.Phi.shape)
    elif block == "eta":
        t.eta = t.eta.copy()
        t.eta[site] += rng.normal()
    elif block == "lambda":
        t.lam = t.lam.copy()
        t.lam[site] += rng.normal()
    return t


def conditional_consistency(block, n_pairs=100, seed=0, prior=PriorConfig()) -> float:
    """Largest |Δ log conditional − Δ log joint| over random state pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        n, M, p, q = rng.integers(3, 8), rng.integers(2, 7), rng.integers(3, 7), rng.integers(1, 3)
        s = random_state(rng, n, M, p, q)
        X = rng.normal(size=(M, n, p))
        site = None
        if block == "eta":
            site = int(rng.integers(M))
        elif block == "lambda":
            site = (int(rng.integers(M)), int(rng.integers(q)))
        t = _perturb(block, s, rng, site)
        d_cond = _block_log_conditional(block, t, X, prior, site) - _block_log_conditional(block, s, X, prior, site)
        d_joint = log_joint(t, X, prior) - log_joint(s, X, prior)
        worst = max(worst, abs(d_cond - d_joint))
    return worst


# ---------------------------------------------------------------------------
# grid posteriors


def grid_posterior(logf, lo, hi, coarse=801, fine=6001, drop=45.0):
    """Normalised 1-D posterior on a grid that zooms in on the mass.

    ``logf`` maps a scalar to an unnormalised log density. Returns
    (grid, density, cdf, mean).
    """
    xs = np.linspace(lo, hi, coarse)
    lp = np.array([logf(x) for x in xs])
    keep = np.flatnonzero(lp > np.nanmax(lp) - drop)
    step = xs[1] - xs[0]
    a, b = max(lo, xs[keep[0]] - step), min(hi, xs[keep[-1]] + step)
    g = np.linspace(a, b, fine)
    lp = np.array([logf(x) for x in g])
    dens = np.exp(lp - lp.max())
    dens /= np.trapezoid(dens, g)
    cdf = cumulative_trapezoid(dens, g, initial=0.0)
    cdf /= cdf[-1]
    return g, dens, cdf, float(np.trapezoid(g * dens, g))


def ks_to_grid(draws, grid, cdf) -> float:
    return float(stats.ks_1samp(draws, lambda v: np.interp(v, grid, cdf)).statistic)


def grid_setup(seed=0):
    """A consistent state (the simulation truth) on data large enough for tight conditionals."""
    ds, truth = simulate_dppca(n=200, p=10, M=40, q=2, rng=seed)
    X = ds.by_time()
    s = ModelState(
        W=truth.W.copy(), U=truth.U.copy(), eta=truth.eta.copy(), lam=truth.lam.copy(),
        nu=truth.theta1.nu, phi=truth.theta1.phi, v2=truth.theta1.v2,
        mu=np.array(truth.theta2.mu, dtype=float), Phi=np.array(truth.theta2.Phi, dtype=float),
        V=np.array(truth.theta2.V, dtype=float),
    )
    return s, X


def _with(s: ModelState, name, value, index=None) -> ModelState:
    t = s.copy()
    if index is None:
        setattr(t, name, float(value))
    else:
        arr = getattr(t, name).copy()
        arr[index] = value
        setattr(t, name, arr)
    return t


GRID_PARAMS = ("nu", "mu", "v2", "V", "phi", "eta", "lambda")


def grid_check(param, n_draws=100_000, seed=0, prior=PriorConfig(), mh_steps=60):
    """Compare one update against the grid posterior of ``log_joint``.

    Returns (|mean − grid mean|, KS distance of ``n_draws`` draws). For the
    conjugate blocks the mean is the analytic conditional mean; for the MH
    blocks it is the mean of draws from ``n_draws`` independent chains run
    for ``mh_steps`` steps from an overdispersed start.
    """
    s, X = grid_setup(seed)
    rng = np.random.default_rng(seed + 1)
    M, n, p = X.shape
    j, m = 1, M // 2

    if param == "nu":
        logf = lambda v: log_joint(_with(s, "nu", v), X, prior)  # noqa: E731
        lo, hi = -15.0, 15.0
        mean, var = sv_mean_conditional(s.eta[:, None], s.phi, s.v2, prior.nu_mean, prior.nu_var)
        analytic = float(mean[0])
        draws = update_sv_mean(np.tile(s.eta[:, None], (1, n_draws)), s.phi, s.v2, prior.nu_mean, prior.nu_var, rng)
    elif param == "mu":
        logf = lambda v: log_joint(_with(s, "mu", v, j), X, prior)  # noqa: E731
        lo, hi = -15.0, 15.0
        mean, _ = sv_mean_conditional(s.lam[:, [j]], s.Phi[j], s.V[j], prior.mu_mean, prior.mu_var)
        analytic = float(mean[0])
        draws = update_sv_mean(np.tile(s.lam[:, [j]], (1, n_draws)), s.Phi[j], s.V[j], prior.mu_mean,
                               prior.mu_var, rng)
    elif param == "v2":
        logf = lambda v: log_joint(_with(s, "v2", v), X, prior)  # noqa: E731
        lo, hi = 1e-4, 5.0
        shape, scale = sv_innovation_conditional(s.eta[:, None], s.nu, s.phi, prior.ig_alpha, prior.ig_beta)
        analytic = float(scale[0] / (shape[0] - 1))
        draws = update_sv_innovation_var(np.tile(s.eta[:, None], (1, n_draws)), s.nu, s.phi, prior.ig_alpha,
                                         prior.ig_beta, rng)
    elif param == "V":
        logf = lambda v: log_joint(_with(s, "V", v, j), X, prior)  # noqa: E731
        lo, hi = 1e-4, 5.0
        shape, scale = sv_innovation_conditional(s.lam[:, [j]], s.mu[j], s.Phi[j], prior.ig_alpha, prior.ig_beta)
        analytic = float(scale[0] / (shape[0] - 1))
        draws = update_sv_innovation_var(np.tile(s.lam[:, [j]], (1, n_draws)), s.mu[j], s.Phi[j], prior.ig_alpha,
                                         prior.ig_beta, rng)
    elif param == "phi":
        logf = lambda v: log_joint(_with(s, "phi", v), X, prior)  # noqa: E731
        lo, hi = -1 + 1e-9, 1 - 1e-9
        draws = rng.uniform(-0.99, 0.99, n_draws)
        path = s.eta[:, None]
        for _ in range(mh_steps):
            draws, _ = update_persistence_mh(path, s.nu, draws, s.v2, prior.phi_mean, prior.phi_var, 0.3, rng)
        analytic = None
    elif param in ("eta", "lambda"):
        if param == "eta":
            logf = lambda v: log_joint(_with(s, "eta", v, m), X, prior)  # noqa: E731
            path, ss, count = s.eta, residual_ss(s, X), n * p
            center, phi, v2 = s.nu, s.phi, s.v2
        else:
            logf = lambda v: log_joint(_with(s, "lam", v, (m, j)), X, prior)  # noqa: E731
            path, ss, count = s.lam[:, j], (s.U[:, :, j] ** 2).sum(axis=1), n
            center, phi, v2 = s.mu[j], s.Phi[j], s.V[j]
        lo, hi = path[m] - 8.0, path[m] + 8.0
        x = np.tile(path[:, None], (1, n_draws))
        x[m] = path[m] + rng.uniform(-2.0, 2.0, n_draws)
        ssx = np.tile(ss[:, None], (1, n_draws))
        for _ in range(mh_steps):
            update_log_volatility_sites(x, [m], count, ssx, center, phi, v2, 0.5, rng)
        draws = x[m]
        analytic = None
    else:
        raise ValueError(param)

    grid, _, cdf, gmean = grid_posterior(logf, lo, hi)
    draws = np.ravel(draws)
    est = analytic if analytic is not None else float(draws.mean())
    return abs(est - gmean), ks_to_grid(draws, grid, cdf)
