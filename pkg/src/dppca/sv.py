"""Stochastic-volatility AR(1) processes on log-variances.

Two processes appear in the model: a scalar AR(1) on the error
log-variances ``eta`` and a diagonal VAR(1) on the latent-score
log-variances ``lambda``. With diagonal persistence and innovation
matrices the VAR(1) is just ``q`` independent AR(1) chains, so everything
here is written for arrays of shape ``(M, c)`` with per-component
parameters of shape ``(c,)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))
STATIONARITY_TOL = 1e-12


class StationarityError(ValueError):
    pass


def check_stationary(phi) -> None:
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)) or np.any(1.0 - np.abs(phi) < STATIONARITY_TOL):
        raise StationarityError(f"persistence must lie strictly inside (-1, 1), got {phi}")


@dataclass(frozen=True)
class SvScalarParams:
    nu: float
    phi: float
    v2: float

    def __post_init__(self):
        check_stationary(self.phi)
        if not self.v2 > 0:
            raise ValueError(f"innovation variance must be positive, got {self.v2}")

    def arrays(self):
        return np.array([self.nu]), np.array([self.phi]), np.array([self.v2])


@dataclass(frozen=True, eq=False)
class SvVectorParams:
    mu: np.ndarray
    Phi: np.ndarray  # diagonal entries only
    V: np.ndarray  # diagonal entries only

    def __post_init__(self):
        mu, Phi, V = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.mu, self.Phi, self.V))
        if not (mu.shape == Phi.shape == V.shape) or mu.ndim != 1:
            raise ValueError("mu, Phi and V must be vectors of equal length")
        check_stationary(Phi)
        if np.any(~(V > 0)):
            raise ValueError(f"innovation variances must be positive, got {V}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "V", V)

    @property
    def q(self) -> int:
        return self.mu.shape[0]

    def arrays(self):
        return self.mu, self.Phi, self.V


@dataclass(frozen=True, eq=False)
class LogVolatilityPath:
    eta: np.ndarray  # (M,)
    lam: np.ndarray  # (M, q)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.lam))):
            raise ValueError("log-volatilities must be finite")

    @property
    def sigma2(self) -> np.ndarray:
        return np.exp(self.eta)

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.lam)


def stationary_var(phi, v2):
    phi = np.asarray(phi, dtype=float)
    return v2 / ((1.0 - phi) * (1.0 + phi))


def ar1_logpdf(x, center, phi, v2) -> np.ndarray:
    """Per-component log density of AR(1) paths ``x`` of shape ``(M, c)``.

    Stationary initial term plus ``M - 1`` Gaussian transitions.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    center, phi, v2 = (np.broadcast_to(np.asarray(a, dtype=float), x.shape[1:]) for a in (center, phi, v2))
    check_stationary(phi)
    d = x - center
    one_m_phi2 = (1.0 - phi) * (1.0 + phi)
    init = -0.5 * (LOG_2PI + np.log(v2) - np.log(one_m_phi2) + one_m_phi2 * d[0] ** 2 / v2)
    r = d[1:] - phi * d[:-1]
    trans = -0.5 * ((x.shape[0] - 1) * (LOG_2PI + np.log(v2)) + (r * r).sum(axis=0) / v2)
    return init + trans


def sv_log_prior_scalar(eta, params: SvScalarParams) -> float:
    eta = np.asarray(eta, dtype=float).reshape(-1, 1)
    return float(ar1_logpdf(eta, params.nu, params.phi, params.v2)[0])


def sv_log_prior_vector(lam, params: SvVectorParams) -> float:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 2 or lam.shape[1] != params.q:
        raise ValueError(f"lambda must be (M, {params.q}), got {lam.shape}")
    return float(ar1_logpdf(lam, params.mu, params.Phi, params.V).sum())


def simulate_ar1(center, phi, v2, M: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``(M, c)`` stationary AR(1) paths."""
    center, phi, v2 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (center, phi, v2)))
    check_stationary(phi)
    c = center.shape[0]
    z = rng.standard_normal((M, c))
    out = np.empty((M, c))
    out[0] = center + np.sqrt(stationary_var(phi, v2)) * z[0]
    sd = np.sqrt(v2)
    for m in range(1, M):
        out[m] = center + phi * (out[m - 1] - center) + sd * z[m]
    return out


def simulate_sv_path(params, M: int, rng: np.random.Generator) -> np.ndarray:
    """Simulate a log-volatility path: ``(M,)`` for scalar params, ``(M, q)`` for vector."""
    if isinstance(params, SvScalarParams):
        return simulate_ar1(params.nu, params.phi, params.v2, M, rng)[:, 0]
    return simulate_ar1(params.mu, params.Phi, params.V, M, rng)
