"""Posterior summaries, influential-variable ranking and predictive checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_LAG = 40


@dataclass(frozen=True)
class PosteriorSummary:
    name: str
    mean: float
    lower: float  # 2.5% quantile
    upper: float  # 97.5% quantile
    acf: np.ndarray
    ess: float

    def format(self, digits: int = 2) -> str:
        return format_estimate(self.mean, self.lower, self.upper, digits)


def format_estimate(mean, lower, upper, digits: int = 2) -> str:
    """``0.69 (0.15, 0.97)`` style string."""
    return f"{mean:.{digits}f} ({lower:.{digits}f}, {upper:.{digits}f})"


def autocorrelation(x, max_lag: int = MAX_LAG) -> np.ndarray:
    """Biased sample ACF, lags 0..max_lag. A constant trace gives 1 then zeros."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    max_lag = min(max_lag, n - 1)
    out = np.zeros(max_lag + 1)
    out[0] = 1.0
    c0 = d @ d
    if c0 <= 1e-300 * max(1.0, n):
        return out
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    out[1:] = acov[1:] / c0
    return out


def effective_sample_size(x) -> float:
    """S / (1 + 2 sum rho_k), summing lags until the first negative ACF value."""
    x = np.asarray(x, dtype=float)
    rho = autocorrelation(x, x.size - 1)
    total = 0.0
    for r in rho[1:]:
        if r < 0:
            break
        total += r
    return x.size / (1.0 + 2.0 * total)


def summarize_trace(name: str, x, max_lag: int = MAX_LAG) -> PosteriorSummary:
    x = np.asarray(x, dtype=float)
    if x.size < 10:
        raise ValueError(f"{name}: need at least 10 retained samples, got {x.size}")
    lo, hi = np.quantile(x, [0.025, 0.975])
    return PosteriorSummary(name, float(x.mean()), float(lo), float(hi), autocorrelation(x, max_lag),
                            effective_sample_size(x))


def summarize(chain, max_lag: int = MAX_LAG) -> list[PosteriorSummary]:
    return [summarize_trace(name, trace, max_lag) for name, trace in chain.scalar_params().items()]


# ---------------------------------------------------------------------------
# influential variables


@dataclass(frozen=True)
class RankEntry:
    time_index: int
    rank: int
    variable: int
    mean: float
    lower: float
    upper: float

    @property
    def ci_excludes_zero(self) -> bool:
        return self.lower > 0 or self.upper < 0


@dataclass(frozen=True)
class InfluenceRanking:
    k: int
    entries: list = field(default_factory=list)

    def at(self, m: int) -> list:
        return [e for e in self.entries if e.time_index == m]

    @property
    def union(self) -> list:
        """Distinct variables in order of first appearance."""
        return list(dict.fromkeys(e.variable for e in self.entries))


def rank_influential(W, k: int = 5, component: int = 0) -> InfluenceRanking:
    """Rank variables by |posterior mean loading| on one component, per time point.

    ``W`` is an identified loadings chain (S, M, p, q) or a PosteriorChain.
    """
    W = getattr(W, "W", W)
    S, M, p, q = W.shape
    k = min(k, p)
    loads = W[..., component]  # (S, M, p)
    mean = loads.mean(axis=0)
    lo, hi = np.quantile(loads, [0.025, 0.975], axis=0)
    entries = []
    for m in range(M):
        # stable sort on -|mean| keeps ties in variable order
        order = np.argsort(-np.abs(mean[m]), kind="stable")[:k]
        for r, v in enumerate(order):
            entries.append(RankEntry(m, r + 1, int(v), float(mean[m, v]), float(lo[m, v]), float(hi[m, v])))
    return InfluenceRanking(k=k, entries=entries)


# ---------------------------------------------------------------------------
# posterior predictive check


def covariance_mad(A, B) -> float:
    """Mean absolute difference over the upper triangle (diagonal included)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    iu = np.triu_indices(A.shape[0])
    return float(np.abs(A[iu] - B[iu]).mean())


@dataclass(frozen=True)
class PpcReport:
    mads: np.ndarray  # (n_reps, M)
    draw_indices: np.ndarray
    threshold: float
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def fraction_above(self) -> float:
        return float((self.mads > self.threshold).mean())


def replicate_dataset(W, eta, lam, n: int, rng) -> np.ndarray:
    """One replicated dataset (M, n, p) from a single posterior draw."""
    M, p, q = W.shape
    U = rng.standard_normal((M, n, q)) * np.exp(lam / 2)[:, None, :]
    E = rng.standard_normal((M, n, p)) * np.exp(eta / 2)[:, None, None]
    return U @ W.transpose(0, 2, 1) + E


def posterior_predictive_check(chain, data, n_reps: int = 100, threshold: float = 1.0, rng=None,
                               bins: int = 20) -> PpcReport:
    """Compare observed and replicated per-time covariance matrices via MAD."""
    from .sampler import _as_X

    X = _as_X(data)
    M, n, p = X.shape
    rng = np.random.default_rng(rng)
    S = len(chain)
    idx = np.linspace(0, S - 1, n_reps).round().astype(int) if n_reps <= S else rng.integers(0, S, n_reps)
    obs_cov = [np.cov(X[m], rowvar=False) for m in range(M)]
    mads = np.empty((n_reps, M))
    for r, s in enumerate(idx):
        Xrep = replicate_dataset(chain.W[s], chain.eta[s], chain.lam[s], n, rng)
        for m in range(M):
            mads[r, m] = covariance_mad(obs_cov[m], np.cov(Xrep[m], rowvar=False))
    top = max(float(mads.max()), threshold) * (1 + 1e-9)
    counts, edges = np.histogram(mads, bins=bins, range=(0.0, top))
    return PpcReport(mads=mads, draw_indices=idx, threshold=threshold, bin_edges=edges, counts=counts)
