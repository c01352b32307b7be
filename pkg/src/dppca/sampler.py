"""Metropolis-within-Gibbs sampler for dynamic PPCA.

Model, for observation i at time m::

    x_im = W_m u_im + e_im,      e_im ~ N(0, exp(eta_m) I_p)
    u_im ~ N(0, diag(exp(lambda_m)))
    eta    ~ AR(1)(nu, phi, v2)
    lambda ~ q independent AR(1)(mu_j, Phi_j, V_j)

Priors: rows of W_m ~ N(0, s I_q); nu, mu_j ~ N; v2, V_j ~ IG(alpha/2, beta/2);
phi, Phi_j ~ N truncated to (-1, 1).

Loadings, scores, AR centres and innovation variances have conjugate full
conditionals. Persistence parameters use a truncated-normal random walk;
log-volatilities use single-site Metropolis-Hastings with a Gaussian
proposal built from a second-order Taylor expansion of the log target at
the current value, each followed by a random-walk step. Sites of the same parity in time are conditionally
independent given the others, so each parity class is updated in one
vectorised step.

Every block exposes its conditional (``*_conditional`` or ``*_log_target``)
separately from the update so that tests can check it against
:func:`log_joint`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np
from scipy import stats

from . import truncnorm
from .data import LongitudinalDataset, McmcConfig, PriorConfig
from .ppca import PpcaFit, fit_all_timepoints
from .sv import LOG_2PI, LogVolatilityPath, SvScalarParams, SvVectorParams, ar1_logpdf

log = logging.getLogger(__name__)

BLOCKS = ("eta", "lambda", "phi", "Phi")
# log-volatility blocks are tallied per move type and pooled for the block rate
_COUNTERS = ("eta_taylor", "eta_rw", "lambda_taylor", "lambda_rw", "phi", "Phi")


class NumericalError(RuntimeError):
    pass


@dataclass(eq=False)
class ModelState:
    W: np.ndarray  # (M, p, q)
    U: np.ndarray  # (M, n, q)
    eta: np.ndarray  # (M,)
    lam: np.ndarray  # (M, q)
    nu: float
    phi: float
    v2: float
    mu: np.ndarray  # (q,)
    Phi: np.ndarray  # (q,)
    V: np.ndarray  # (q,)

    @property
    def theta1(self) -> SvScalarParams:
        return SvScalarParams(self.nu, self.phi, self.v2)

    @property
    def theta2(self) -> SvVectorParams:
        return SvVectorParams(self.mu, self.Phi, self.V)

    @property
    def vol(self) -> LogVolatilityPath:
        return LogVolatilityPath(self.eta, self.lam)

    @property
    def dims(self):
        """(n, M, p, q)"""
        M, n, q = self.U.shape
        return n, M, self.W.shape[1], q

    def copy(self) -> "ModelState":
        return ModelState(
            W=self.W.copy(), U=self.U.copy(), eta=self.eta.copy(), lam=self.lam.copy(),
            nu=float(self.nu), phi=float(self.phi), v2=float(self.v2),
            mu=self.mu.copy(), Phi=self.Phi.copy(), V=self.V.copy(),
        )

    def check(self, X: np.ndarray) -> None:
        M, n, p = X.shape
        q = self.U.shape[2]
        expected = {"W": (M, p, q), "U": (M, n, q), "eta": (M,), "lam": (M, q),
                    "mu": (q,), "Phi": (q,), "V": (q,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"state.{name} has shape {getattr(self, name).shape}, expected {shape}")


def _cat(first, rest) -> np.ndarray:
    """Scalar-block parameter followed by the per-component ones."""
    return np.concatenate(([first], np.asarray(rest, dtype=float)))


def _as_X(data) -> np.ndarray:
    if isinstance(data, LongitudinalDataset):
        return data.by_time()
    return np.asarray(data, dtype=float)


# ---------------------------------------------------------------------------
# joint density


def log_aug_likelihood(state: ModelState, data) -> float:
    """log p(X, U, Lambda, eta | W, theta1, theta2)."""
    X = _as_X(data)
    state.check(X)
    M, n, p = X.shape
    resid = X - state.U @ state.W.transpose(0, 2, 1)
    ss = np.einsum("mnp,mnp->m", resid, resid)
    ll_x = -0.5 * (n * p * (LOG_2PI + state.eta) + np.exp(-state.eta) * ss).sum()
    ll_u = -0.5 * (n * (LOG_2PI + state.lam) + np.exp(-state.lam) * (state.U ** 2).sum(axis=1)).sum()
    ll_eta = ar1_logpdf(state.eta[:, None], state.nu, state.phi, state.v2).sum()
    ll_lam = ar1_logpdf(state.lam, state.mu, state.Phi, state.V).sum()
    return float(ll_x + ll_u + ll_eta + ll_lam)


def log_param_prior(state: ModelState, prior: PriorConfig) -> float:
    s = prior.loading_prior_cov_scale
    W = state.W
    lp = -0.5 * (W.size * (LOG_2PI + np.log(s)) + (W * W).sum() / s)
    lp += stats.norm.logpdf(state.nu, prior.nu_mean, np.sqrt(prior.nu_var))
    lp += stats.norm.logpdf(state.mu, prior.mu_mean, np.sqrt(prior.mu_var)).sum()
    a, b = prior.ig_alpha / 2, prior.ig_beta / 2
    lp += stats.invgamma.logpdf(state.v2, a, scale=b)
    lp += stats.invgamma.logpdf(state.V, a, scale=b).sum()
    sd = np.sqrt(prior.phi_var)
    lp += truncnorm.logpdf(state.phi, prior.phi_mean, sd, -1.0, 1.0)
    lp += truncnorm.logpdf(state.Phi, prior.phi_mean, sd, -1.0, 1.0).sum()
    return float(lp)


def log_joint(state: ModelState, data, prior: PriorConfig) -> float:
    """Unnormalised log posterior of all parameters and latent variables."""
    return log_aug_likelihood(state, data) + log_param_prior(state, prior)


# ---------------------------------------------------------------------------
# scores and loadings


def _gaussian_draw(mean, P, rng, what):
    """Rows of ``mean`` (B, r, q) plus N(0, P^{-1}) noise, P of shape (B, q, q)."""
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what}: conditional precision is not positive definite") from None
    B, r, q = mean.shape
    z = rng.standard_normal((B, q, r))
    return mean + np.linalg.solve(L.transpose(0, 2, 1), z).transpose(0, 2, 1)


def score_conditional(state: ModelState, data):
    """Mean ``(M, n, q)`` and shared precision ``(M, q, q)`` of each u_im."""
    X = _as_X(data)
    w = np.exp(-state.eta)[:, None, None]
    WtW = state.W.transpose(0, 2, 1) @ state.W
    P = w * WtW
    idx = np.arange(P.shape[1])
    P[:, idx, idx] += np.exp(-state.lam)
    B = w * (X @ state.W)
    mean = np.linalg.solve(P, B.transpose(0, 2, 1)).transpose(0, 2, 1)
    return mean, P


def _conditional(fn, what, *args):
    try:
        with np.errstate(invalid="raise", over="raise"):
            return fn(*args)
    except (np.linalg.LinAlgError, FloatingPointError):
        raise NumericalError(f"{what}: conditional precision is singular or non-finite") from None


def update_scores(state: ModelState, data, rng) -> np.ndarray:
    mean, P = _conditional(score_conditional, "scores", state, data)
    state.U = _gaussian_draw(mean, P, rng, "scores")
    return state.U


def loading_conditional(state: ModelState, data, prior: PriorConfig):
    """Mean ``(M, p, q)`` and shared precision ``(M, q, q)`` of each row of W_m."""
    X = _as_X(data)
    w = np.exp(-state.eta)[:, None, None]
    P = w * (state.U.transpose(0, 2, 1) @ state.U)
    idx = np.arange(P.shape[1])
    P[:, idx, idx] += 1.0 / prior.loading_prior_cov_scale
    B = w * (X.transpose(0, 2, 1) @ state.U)
    mean = np.linalg.solve(P, B.transpose(0, 2, 1)).transpose(0, 2, 1)
    return mean, P


def update_loadings(state: ModelState, data, prior: PriorConfig, rng) -> np.ndarray:
    mean, P = _conditional(loading_conditional, "loadings", state, data, prior)
    state.W = _gaussian_draw(mean, P, rng, "loadings")
    return state.W


def gaussian_logpdf_prec(x, mean, P) -> float:
    """Sum of log N(x_r | mean_r, P^{-1}) over rows; ``x, mean`` (B, r, q), ``P`` (B, q, q)."""
    L = np.linalg.cholesky(P)
    d = x - mean
    # ||L^T d||^2 = d^T P d
    z = d @ L
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    r, q = x.shape[1], x.shape[2]
    return float((0.5 * r * (logdet - q * LOG_2PI)).sum() - 0.5 * (z * z).sum())


# ---------------------------------------------------------------------------
# AR(1) centre and innovation variance (vectorised over components)


def sv_mean_conditional(x, phi, v2, prior_mean, prior_var):
    """Gaussian conditional of the AR centre for paths ``x`` of shape (M, c)."""
    x = np.asarray(x, dtype=float)
    M = x.shape[0]
    one_m_phi2 = (1.0 - phi) * (1.0 + phi)
    prec = 1.0 / prior_var + (one_m_phi2 + (M - 1) * (1.0 - phi) ** 2) / v2
    lin = (
        prior_mean / prior_var
        + (one_m_phi2 * x[0] + (1.0 - phi) * (x[1:] - phi * x[:-1]).sum(axis=0)) / v2
    )
    return lin / prec, 1.0 / prec


def update_sv_mean(x, phi, v2, prior_mean, prior_var, rng) -> np.ndarray:
    mean, var = sv_mean_conditional(x, phi, v2, prior_mean, prior_var)
    return mean + np.sqrt(var) * rng.standard_normal(np.shape(mean))


def sv_innovation_conditional(x, center, phi, alpha, beta):
    """Inverse-gamma (shape, scale) conditional of the innovation variance."""
    x = np.asarray(x, dtype=float)
    M = x.shape[0]
    d = x - center
    ss = (1.0 - phi) * (1.0 + phi) * d[0] ** 2 + ((d[1:] - phi * d[:-1]) ** 2).sum(axis=0)
    return np.full(np.shape(ss), (alpha + M) / 2.0), (beta + ss) / 2.0


def update_sv_innovation_var(x, center, phi, alpha, beta, rng) -> np.ndarray:
    shape, scale = sv_innovation_conditional(x, center, phi, alpha, beta)
    return scale / rng.gamma(shape)


# ---------------------------------------------------------------------------
# persistence (MH)


def persistence_log_target(phi, x, center, v2, prior_mean, prior_var):
    """Unnormalised log conditional of the persistence; ``-inf`` off (-1, 1)."""
    phi = np.asarray(phi, dtype=float)
    x = np.asarray(x, dtype=float)
    d = x - center
    inside = np.abs(phi) < 1.0
    ph = np.where(inside, phi, 0.0)
    one_m_phi2 = (1.0 - ph) * (1.0 + ph)
    r = d[1:] - ph * d[:-1]
    val = (
        -0.5 * (ph - prior_mean) ** 2 / prior_var
        + 0.5 * np.log(one_m_phi2)
        - 0.5 * (one_m_phi2 * d[0] ** 2 + (r * r).sum(axis=0)) / v2
    )
    return np.where(inside, val, -np.inf)


def persistence_log_accept_ratio(phi_from, phi_to, x, center, v2, prior_mean, prior_var, step):
    """Log MH ratio for a move under the (-1, 1)-truncated random-walk proposal."""
    target = persistence_log_target(phi_to, x, center, v2, prior_mean, prior_var) - persistence_log_target(
        phi_from, x, center, v2, prior_mean, prior_var
    )
    # q(from | to) / q(to | from) reduces to the ratio of window masses
    hastings = truncnorm.log_window_prob(phi_from, step, -1.0, 1.0) - truncnorm.log_window_prob(
        phi_to, step, -1.0, 1.0
    )
    return target + hastings


def update_persistence_mh(x, center, phi, v2, prior_mean, prior_var, step, rng):
    """One MH step per component; returns (new phi, accepted mask)."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    prop = truncnorm.sample(phi, step, -1.0, 1.0, rng)
    log_r = persistence_log_accept_ratio(phi, prop, x, center, v2, prior_mean, prior_var, step)
    ok = np.log(np.maximum(rng.random(phi.shape), truncnorm.DENSITY_FLOOR)) < log_r
    ok &= np.abs(prop) < 1.0 - 1e-12
    return np.where(ok, prop, phi), ok


# ---------------------------------------------------------------------------
# log-volatilities (single-site MH with Taylor proposals)


def site_prior(x, sites, center, phi, v2):
    """Gaussian AR(1) conditional of x[m] given its neighbours, for m in ``sites``.

    Returns (mean, precision), each of shape (len(sites), c).
    """
    x = np.asarray(x, dtype=float)
    M, c = x.shape
    sites = np.asarray(sites)
    dpad = np.zeros((M + 2, c))
    dpad[1:-1] = x - center
    has_prev = (sites > 0)[:, None]
    has_next = (sites < M - 1)[:, None]
    # precision * v2: interior 1 + phi^2, endpoint 1, lone site 1 - phi^2
    prec_v2 = np.where(
        has_prev & has_next, 1.0 + phi * phi, np.where(has_prev | has_next, 1.0, (1.0 - phi) * (1.0 + phi))
    )
    mean = center + phi * (dpad[sites] + dpad[sites + 2]) / prec_v2
    return mean, prec_v2 / v2


def _site_target(value, count, ss, prior_mean, prior_prec):
    return -0.5 * count * value - 0.5 * ss * np.exp(-value) - 0.5 * prior_prec * (value - prior_mean) ** 2


def log_volatility_log_target(value, count, ss, prior_mean, prior_prec):
    """Log conditional (up to a constant) of one log-variance site.

    ``count`` Gaussian terms with variance ``exp(value)`` and residual sum of
    squares ``ss``, times the Gaussian AR(1) conditional prior.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        out = _site_target(value, count, ss, prior_mean, prior_prec)
    return np.where(np.isfinite(out), out, -np.inf)


def _taylor_proposal(value, count, ss, prior_mean, prior_prec, step):
    # Newton step on the log target; random walk where the curvature is unusable
    e = ss * np.exp(-value)
    g = -0.5 * count + 0.5 * e - prior_prec * (value - prior_mean)
    h = -0.5 * e - prior_prec
    usable = np.isfinite(g) & (h < 0)
    hs = np.where(usable, h, -1.0)
    return np.where(usable, value - g / hs, value), np.where(usable, -1.0 / hs, step * step)


def _normal_logpdf(x, mean, var):
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def log_volatility_log_accept_ratio(cur, prop, count, ss, prior_mean, prior_prec, step):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        fwd_mean, fwd_var = _taylor_proposal(cur, count, ss, prior_mean, prior_prec, step)
        rev_mean, rev_var = _taylor_proposal(prop, count, ss, prior_mean, prior_prec, step)
        out = (
            _site_target(prop, count, ss, prior_mean, prior_prec)
            - _site_target(cur, count, ss, prior_mean, prior_prec)
            + _normal_logpdf(cur, rev_mean, rev_var)
            - _normal_logpdf(prop, fwd_mean, fwd_var)
        )
    return np.where(np.isfinite(out), out, -np.inf)


def update_log_volatility_sites(x, sites, count, ss, center, phi, v2, step, rng):
    """MH-update ``x[sites]`` in place; sites must be pairwise non-adjacent.

    Each site gets a Taylor-proposal step followed by a random-walk step with
    scale ``step``. The Taylor proposal is close to exact near the mode but
    far from it its reverse density vanishes, so on its own a chain started
    in the tails can stay there; the random-walk step restores mixing.

    ``x`` and ``ss`` have shape (M, c); ``count``, ``center``, ``phi``,
    ``v2`` and ``step`` broadcast against (c,). Returns the accepted masks
    of shape (2, len(sites), c): Taylor moves first, random-walk moves second.
    """
    sites = np.asarray(sites)
    prior_mean, prior_prec = site_prior(x, sites, center, phi, v2)
    cur = x[sites]
    s = ss[sites]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        mean, var = _taylor_proposal(cur, count, s, prior_mean, prior_prec, step)
        prop = mean + np.sqrt(var) * rng.standard_normal(cur.shape)
        rev_mean, rev_var = _taylor_proposal(prop, count, s, prior_mean, prior_prec, step)
        f_cur = _site_target(cur, count, s, prior_mean, prior_prec)
        f_prop = _site_target(prop, count, s, prior_mean, prior_prec)
        log_r = f_prop - f_cur + _normal_logpdf(cur, rev_mean, rev_var) - _normal_logpdf(prop, mean, var)
    log_u = np.log(np.maximum(rng.random(cur.shape), truncnorm.DENSITY_FLOOR))
    ok_taylor = np.isfinite(log_r) & (log_u < log_r)
    cur = np.where(ok_taylor, prop, cur)
    f_cur = np.where(ok_taylor, f_prop, f_cur)

    prop = cur + step * rng.standard_normal(cur.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        log_r = _site_target(prop, count, s, prior_mean, prior_prec) - f_cur
    log_u = np.log(np.maximum(rng.random(cur.shape), truncnorm.DENSITY_FLOOR))
    ok_rw = np.isfinite(log_r) & (log_u < log_r)
    x[sites] = np.where(ok_rw, prop, cur)
    return np.stack([ok_taylor, ok_rw])


def update_log_volatility_path(x, count, ss, center, phi, v2, step, rng):
    """Visit every site once, even time indices first, then odd; returns accepted moves."""
    M = x.shape[0]
    acc = 0
    for start in (0, 1):
        sites = np.arange(start, M, 2)
        if sites.size:
            acc += int(update_log_volatility_sites(x, sites, count, ss, center, phi, v2, step, rng).sum())
    return acc


def residual_ss(state: ModelState, X) -> np.ndarray:
    resid = X - state.U @ state.W.transpose(0, 2, 1)
    return np.einsum("mnp,mnp->m", resid, resid)


def update_log_volatilities_mh(state: ModelState, data, rng, steps=None):
    """Update eta and lambda; returns accepted-move counts, each of shape (2,).

    Entry 0 counts Taylor moves, entry 1 random-walk moves.

    Given scores and loadings the two paths are conditionally independent,
    so they are stacked as columns of one (M, 1 + q) array and updated
    together.
    """
    X = _as_X(data)
    M, n, p = X.shape
    step_eta, step_lam = (0.5, 0.5) if steps is None else (steps.eta, steps.lam)
    q = state.lam.shape[1]
    paths = np.column_stack([state.eta, state.lam])
    ss = np.column_stack([residual_ss(state, X), (state.U ** 2).sum(axis=1)])
    count = _cat(n * p, np.full(q, n))
    center = _cat(state.nu, state.mu)
    phi = _cat(state.phi, state.Phi)
    v2 = _cat(state.v2, state.V)
    step = _cat(step_eta, np.full(q, step_lam))
    acc = np.zeros((2, 1 + q), dtype=int)
    for start in (0, 1):
        sites = np.arange(start, M, 2)
        if sites.size:
            acc += update_log_volatility_sites(paths, sites, count, ss, center, phi, v2, step, rng).sum(axis=1)
    state.eta = paths[:, 0].copy()
    state.lam = paths[:, 1:].copy()
    return acc[:, 0], acc[:, 1:].sum(axis=1)


# ---------------------------------------------------------------------------
# chain


@dataclass(eq=False)
class PosteriorChain:
    W: np.ndarray  # (S, M, p, q)
    U: np.ndarray  # (S, M, n, q)
    eta: np.ndarray  # (S, M)
    lam: np.ndarray  # (S, M, q)
    nu: np.ndarray  # (S,)
    phi: np.ndarray
    v2: np.ndarray
    mu: np.ndarray  # (S, q)
    Phi: np.ndarray
    V: np.ndarray
    log_posterior_trace: np.ndarray  # (S,)
    acceptance: dict
    config: McmcConfig
    prior: PriorConfig = field(default_factory=PriorConfig)
    rotations: np.ndarray | None = None  # (S, M, q, q) once identified
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.W.shape[0]

    @property
    def dims(self):
        S, M, p, q = self.W.shape
        return self.U.shape[2], M, p, q

    def state(self, s: int) -> ModelState:
        return ModelState(
            W=self.W[s].copy(), U=self.U[s].copy(), eta=self.eta[s].copy(), lam=self.lam[s].copy(),
            nu=float(self.nu[s]), phi=float(self.phi[s]), v2=float(self.v2[s]),
            mu=self.mu[s].copy(), Phi=self.Phi[s].copy(), V=self.V[s].copy(),
        )

    @property
    def samples(self):
        return [self.state(s) for s in range(len(self))]

    def scalar_params(self) -> dict:
        """Named (S,) traces of every scalar SV parameter and log-volatility."""
        out = {"phi": self.phi, "nu": self.nu, "v2": self.v2}
        q = self.mu.shape[1]
        for j in range(q):
            out[f"Phi_{j + 1}"] = self.Phi[:, j]
        for j in range(q):
            out[f"mu_{j + 1}"] = self.mu[:, j]
        for j in range(q):
            out[f"V_{j + 1}"] = self.V[:, j]
        for m in range(self.eta.shape[1]):
            out[f"eta_{m + 1}"] = self.eta[:, m]
        for m in range(self.lam.shape[1]):
            for j in range(q):
                out[f"lambda_{j + 1}_{m + 1}"] = self.lam[:, m, j]
        return out


def _prior_means(prior: PriorConfig):
    a, b = prior.ig_alpha / 2, prior.ig_beta / 2
    var_mean = b / (a - 1) if a > 1 else b / (a + 1)  # IG mean, or mode when the mean is undefined
    sd = np.sqrt(prior.phi_var)
    phi_mean = float(stats.truncnorm.mean((-1 - prior.phi_mean) / sd, (1 - prior.phi_mean) / sd,
                                          loc=prior.phi_mean, scale=sd))
    return var_mean, phi_mean


def initial_state(X, q: int, prior: PriorConfig, init=None) -> ModelState:
    """PPCA loadings per time point; SV parameters at their prior means."""
    M, n, p = X.shape
    if init is None:
        from .ppca import fit_ppca

        init = [fit_ppca(X[m], q) for m in range(M)]
    if len(init) != M:
        raise ValueError(f"need {M} PPCA fits for initialisation, got {len(init)}")
    var_mean, phi_mean = _prior_means(prior)
    return ModelState(
        W=np.stack([f.W_mle for f in init]).astype(float),
        U=np.zeros((M, n, q)),
        eta=np.log([f.sigma2_mle for f in init]),
        lam=np.zeros((M, q)),
        nu=prior.nu_mean,
        phi=phi_mean,
        v2=var_mean,
        mu=np.full(q, prior.mu_mean),
        Phi=np.full(q, phi_mean),
        V=np.full(q, var_mean),
    )


def sweep(state: ModelState, X, prior: PriorConfig, steps, rng, counts: dict) -> None:
    """One full scan: scores, loadings, (eta, lambda), (nu, mu), (v2, V), (phi, Phi).

    Each bracketed pair is conditionally independent given everything
    outside it, so the pair is drawn jointly as one vectorised block; this
    is the same kernel as visiting its members one after the other.
    """
    a, b = prior.ig_alpha, prior.ig_beta
    update_scores(state, X, rng)
    update_loadings(state, X, prior, rng)
    acc_eta, acc_lam = update_log_volatilities_mh(state, X, rng, steps)
    counts["eta_taylor"] += int(acc_eta[0])
    counts["eta_rw"] += int(acc_eta[1])
    counts["lambda_taylor"] += int(acc_lam[0])
    counts["lambda_rw"] += int(acc_lam[1])
    paths = np.column_stack([state.eta, state.lam])
    phi = _cat(state.phi, state.Phi)
    v2 = _cat(state.v2, state.V)
    prior_mean = _cat(prior.nu_mean, np.full(state.mu.shape, prior.mu_mean))
    prior_var = _cat(prior.nu_var, np.full(state.mu.shape, prior.mu_var))
    center = update_sv_mean(paths, phi, v2, prior_mean, prior_var, rng)
    v2 = update_sv_innovation_var(paths, center, phi, a, b, rng)
    phi, ok = update_persistence_mh(paths, center, phi, v2, prior.phi_mean, prior.phi_var, steps.phi, rng)
    counts["phi"] += int(ok[0])
    counts["Phi"] += int(ok[1:].sum())
    state.nu, state.mu = float(center[0]), center[1:]
    state.v2, state.V = float(v2[0]), v2[1:]
    state.phi, state.Phi = float(phi[0]), phi[1:]


def run_chain(ds, prior: PriorConfig, mcmc: McmcConfig, init=None, *, log_every: int = 0) -> PosteriorChain:
    """Run the sampler on (centred) data and keep thinned post-burn-in states."""
    X = _as_X(ds)
    M, n, p = X.shape
    q = mcmc.q
    if not q < min(n, p):
        raise ValueError(f"q={q} must be smaller than min(n, p)={min(n, p)}")
    if init is None and isinstance(ds, LongitudinalDataset):
        init = fit_all_timepoints(ds, q)
    state = initial_state(X, q, prior, init)
    rng = np.random.default_rng(mcmc.seed)
    S = mcmc.n_retained
    out = {
        "W": np.empty((S, M, p, q)), "U": np.empty((S, M, n, q)), "eta": np.empty((S, M)),
        "lam": np.empty((S, M, q)), "nu": np.empty(S), "phi": np.empty(S), "v2": np.empty(S),
        "mu": np.empty((S, q)), "Phi": np.empty((S, q)), "V": np.empty((S, q)),
        "log_posterior_trace": np.empty(S),
    }
    counts = dict.fromkeys(_COUNTERS, 0)
    t0 = perf_counter()
    s = 0
    for it in range(1, mcmc.n_iterations + 1):
        try:
            sweep(state, X, prior, mcmc.mh_step_scales, rng, counts)
        except NumericalError as exc:
            raise NumericalError(f"sweep {it}: {exc}") from None
        if it > mcmc.burn_in_raw and (it - mcmc.burn_in_raw) % mcmc.thin == 0 and s < S:
            for name in ("W", "U", "eta", "lam", "nu", "phi", "v2", "mu", "Phi", "V"):
                out[name][s] = getattr(state, name)
            out["log_posterior_trace"][s] = log_joint(state, X, prior)
            s += 1
        if log_every and it % log_every == 0:
            log.info("sweep %d/%d (%.1fs)", it, mcmc.n_iterations, perf_counter() - t0)
    N = mcmc.n_iterations
    proposed = {"eta_taylor": N * M, "eta_rw": N * M, "lambda_taylor": N * M * q, "lambda_rw": N * M * q,
                "phi": N, "Phi": N * q}
    acceptance = {k: counts[k] / proposed[k] for k in _COUNTERS}
    for b in ("eta", "lambda"):
        acceptance[b] = (counts[f"{b}_taylor"] + counts[f"{b}_rw"]) / (2 * proposed[f"{b}_taylor"])
    return PosteriorChain(**out, acceptance=acceptance, config=mcmc, prior=prior)
