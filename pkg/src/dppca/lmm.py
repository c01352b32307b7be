"""Bayesian random-intercept polynomial mixed models for single-variable profiles.

    y_im = beta_0 + b_i + sum_{r=1..d} beta_r t_m^r + e_im
    b_i ~ N(0, tau2),  e_im ~ N(0, sigma2)

with time coded as centred integers ``t_m = m - (M + 1) / 2``. A Gibbs
sampler draws beta, b, tau2 and sigma2 from their conjugate conditionals.
Backwards selection starts at the cubic model and drops the top-order term
while its 95% interval covers zero.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

MAX_DEGREE = 3


@dataclass(frozen=True)
class LmmPriors:
    beta_var: float = 100.0
    var_shape: float = 0.5
    var_scale: float = 0.05
    var_floor: float = 1e-10


@dataclass(frozen=True)
class LmmMcmc:
    n_iterations: int = 20_000
    thin: int = 10
    burn_in: int = 2_000
    seed: int = 0

    def __post_init__(self):
        if self.thin < 1 or self.burn_in < 0 or self.burn_in >= self.n_iterations:
            raise ValueError("need thin >= 1 and 0 <= burn_in < n_iterations")


@dataclass
class LmmFit:
    variable: object
    degree: int
    beta_mean: np.ndarray
    beta_lower: np.ndarray
    beta_upper: np.ndarray
    tau2: tuple  # (mean, lower, upper)
    sigma2: tuple
    trajectory: np.ndarray  # (M,) population mean profile
    history: list = field(default_factory=list)  # degrees tried during selection

    @property
    def evolves_over_time(self) -> bool:
        return self.degree >= 1

    def top_excludes_zero(self) -> bool:
        return bool(self.beta_lower[-1] > 0 or self.beta_upper[-1] < 0)

    @property
    def top_sign(self) -> int:
        return int(np.sign(self.beta_mean[-1])) if self.degree >= 1 else 0

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
        out["tau2"] = list(self.tau2)
        out["sigma2"] = list(self.sigma2)
        out["evolves_over_time"] = self.evolves_over_time
        return out


def centred_times(M: int) -> np.ndarray:
    return np.arange(1, M + 1) - (M + 1) / 2.0


def time_design(M: int, degree: int) -> np.ndarray:
    """(M, degree + 1) matrix of powers of the centred time index."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in 0..{MAX_DEGREE}, got {degree}")
    return centred_times(M)[:, None] ** np.arange(degree + 1)


# conditionals ---------------------------------------------------------------


def beta_conditional(y, b, sigma2, X, priors: LmmPriors):
    """Gaussian (mean, cov) of beta."""
    n = y.shape[0]
    prec = np.eye(X.shape[1]) / priors.beta_var + n * (X.T @ X) / sigma2
    rhs = X.T @ (y - b[:, None]).sum(axis=0) / sigma2
    cov = np.linalg.inv(prec)
    return cov @ rhs, cov


def intercept_conditional(y, beta, tau2, sigma2, X):
    """Gaussian (mean, var) of each random intercept."""
    M = y.shape[1]
    prec = 1.0 / tau2 + M / sigma2
    return (y - X @ beta).sum(axis=1) / sigma2 / prec, 1.0 / prec


def tau2_conditional(b, priors: LmmPriors):
    return priors.var_shape + b.size / 2.0, priors.var_scale + (b @ b) / 2.0


def sigma2_conditional(y, beta, b, X, priors: LmmPriors):
    r = y - X @ beta - b[:, None]
    return priors.var_shape + r.size / 2.0, priors.var_scale + (r * r).sum() / 2.0


def lmm_log_joint(y, beta, b, tau2, sigma2, degree: int, priors: LmmPriors = LmmPriors()) -> float:
    X = time_design(y.shape[1], degree)
    r = y - X @ beta - b[:, None]
    lp = stats.norm.logpdf(r, scale=np.sqrt(sigma2)).sum()
    lp += stats.norm.logpdf(b, scale=np.sqrt(tau2)).sum()
    lp += stats.norm.logpdf(beta, scale=np.sqrt(priors.beta_var)).sum()
    lp += stats.invgamma.logpdf(tau2, priors.var_shape, scale=priors.var_scale)
    lp += stats.invgamma.logpdf(sigma2, priors.var_shape, scale=priors.var_scale)
    return float(lp)


# sampler --------------------------------------------------------------------


def lmm_gibbs(y, degree: int, priors: LmmPriors = LmmPriors(), mcmc: LmmMcmc = LmmMcmc()) -> dict:
    """Retained traces: beta (S, d+1), tau2 (S,), sigma2 (S,)."""
    y = np.asarray(y, dtype=float)
    n, M = y.shape
    X = time_design(M, degree)
    d1 = degree + 1
    rng = np.random.default_rng(mcmc.seed)
    floor = priors.var_floor
    # I / beta_var and X^T X share eigenvectors, so every beta precision is
    # diagonal in the same basis
    evals, Q = np.linalg.eigh(X.T @ X)
    a_tau = priors.var_shape + n / 2.0
    a_sig = priors.var_shape + n * M / 2.0
    y_colsum = y.sum(axis=0)

    beta = np.linalg.lstsq(X, y.mean(axis=0), rcond=None)[0]
    b = y.mean(axis=1) - (X @ beta).mean()
    sigma2 = max(float(np.var(y - X @ beta - b[:, None])), floor, 1e-6)
    tau2 = max(float(np.var(b)), floor, 1e-6)

    N = mcmc.n_iterations
    z_beta = rng.standard_normal((N, d1))
    z_b = rng.standard_normal((N, n))
    g_tau = rng.gamma(a_tau, size=N)
    g_sig = rng.gamma(a_sig, size=N)

    S = (N - mcmc.burn_in) // mcmc.thin
    out_beta = np.empty((S, d1))
    out_tau = np.empty(S)
    out_sig = np.empty(S)
    s = 0
    for it in range(N):
        lam = 1.0 / priors.beta_var + (n / sigma2) * evals
        rhs = Q.T @ (X.T @ (y_colsum - b.sum()) / sigma2)
        beta = Q @ (rhs / lam + z_beta[it] / np.sqrt(lam))

        fit = X @ beta
        bprec = 1.0 / tau2 + M / sigma2
        b = (y - fit).sum(axis=1) / (sigma2 * bprec) + z_b[it] / np.sqrt(bprec)

        tau2 = max((priors.var_scale + b @ b / 2.0) / g_tau[it], floor)
        r = y - fit - b[:, None]
        sigma2 = max((priors.var_scale + np.einsum("ij,ij->", r, r) / 2.0) / g_sig[it], floor)

        if it >= mcmc.burn_in and (it + 1 - mcmc.burn_in) % mcmc.thin == 0 and s < S:
            out_beta[s] = beta
            out_tau[s] = tau2
            out_sig[s] = sigma2
            s += 1
    return {"beta": out_beta, "tau2": out_tau, "sigma2": out_sig}


def _interval(x):
    lo, hi = np.quantile(x, [0.025, 0.975], axis=0)
    return x.mean(axis=0), lo, hi


def fit_lmm(y, degree: int, priors: LmmPriors = LmmPriors(), mcmc: LmmMcmc = LmmMcmc(), variable=None) -> LmmFit:
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("y must be an (n, M) array of profiles")
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in 0..{MAX_DEGREE}, got {degree}")
    if np.ptp(y) == 0:
        warnings.warn(f"variable {variable}: all values equal; variances collapse to the floor", stacklevel=2)
    tr = lmm_gibbs(y, degree, priors, mcmc)
    bm, bl, bu = _interval(tr["beta"])
    t = _interval(tr["tau2"])
    s = _interval(tr["sigma2"])
    return LmmFit(
        variable=variable,
        degree=degree,
        beta_mean=bm,
        beta_lower=bl,
        beta_upper=bu,
        tau2=tuple(float(v) for v in t),
        sigma2=tuple(float(v) for v in s),
        trajectory=time_design(y.shape[1], degree) @ bm,
    )


def backwards_select(y, priors: LmmPriors = LmmPriors(), mcmc: LmmMcmc = LmmMcmc(), variable=None,
                     start_degree: int = MAX_DEGREE) -> LmmFit:
    """Drop the top-order time term while its 95% interval includes zero."""
    history = []
    for d in range(start_degree, -1, -1):
        fit = fit_lmm(y, d, priors, mcmc, variable)
        history.append(d)
        if d == 0 or fit.top_excludes_zero():
            break
    fit.history = history
    return fit


# comparison -----------------------------------------------------------------


def compare_groups(fits_a, fits_b, labels=("a", "b")) -> list[dict]:
    """Per variable present in either set: evolving status, degrees, top-term signs.

    ``sign_discordant`` marks variables evolving in both groups with the same
    selected degree but opposite signs of the top coefficient.
    """
    A = {f.variable: f for f in fits_a}
    B = {f.variable: f for f in fits_b}
    la, lb = labels
    rows = []
    for v in list(dict.fromkeys([*A, *B])):
        fa, fb = A.get(v), B.get(v)
        ea = bool(fa and fa.evolves_over_time)
        eb = bool(fb and fb.evolves_over_time)
        status = "both" if ea and eb else la if ea else lb if eb else "neither"
        rows.append({
            "variable": v,
            f"in_{la}": fa is not None,
            f"in_{lb}": fb is not None,
            f"evolving_{la}": ea,
            f"evolving_{lb}": eb,
            "status": status,
            f"degree_{la}": fa.degree if fa else None,
            f"degree_{lb}": fb.degree if fb else None,
            f"top_sign_{la}": fa.top_sign if fa else None,
            f"top_sign_{lb}": fb.top_sign if fb else None,
            "sign_discordant": bool(ea and eb and fa.degree == fb.degree and fa.top_sign != fb.top_sign),
        })
    return rows


def overlap(rows) -> list:
    return [r["variable"] for r in rows if all(v for k, v in r.items() if k.startswith("in_"))]
