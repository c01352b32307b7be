"""Truncated normal sampling on an interval.

Rejection from the untruncated normal while the interval carries enough
mass, inverse-CDF otherwise.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

DENSITY_FLOOR = 1e-300
MIN_REJECTION_MASS = 1e-3


def window_prob(mean, sd, lower, upper):
    """P(lower < X < upper) for X ~ N(mean, sd^2)."""
    a = (lower - np.asarray(mean, dtype=float)) / sd
    b = (upper - np.asarray(mean, dtype=float)) / sd
    # use the upper tail when both bounds are positive to keep precision
    flip = a > 0
    a, b = np.where(flip, -b, a), np.where(flip, -a, b)
    return ndtr(b) - ndtr(a)


def log_window_prob(mean, sd, lower, upper):
    """log P(lower < X < upper), accurate far into either tail."""
    a = (lower - np.asarray(mean, dtype=float)) / sd
    b = (upper - np.asarray(mean, dtype=float)) / sd
    flip = a > 0
    a, b = np.where(flip, -b, a), np.where(flip, -a, b)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore"):
        return lb + np.log1p(-np.exp(la - lb))


def logpdf(x, mean, sd, lower, upper):
    """Log density of the truncated normal; ``-inf`` outside the interval."""
    x = np.asarray(x, dtype=float)
    z = (x - mean) / sd
    out = -0.5 * z * z - 0.5 * np.log(2 * np.pi) - np.log(sd) - log_window_prob(mean, sd, lower, upper)
    return np.where((x > lower) & (x < upper), out, -np.inf)


def _inverse_cdf(mean, sd, lower, upper, u):
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    flip = a > 0
    a2, b2 = np.where(flip, -b, a), np.where(flip, -a, b)
    pa, pb = ndtr(a2), ndtr(b2)
    z = ndtri(pa + u * (pb - pa))
    z = np.clip(z, a2, b2)
    z = np.where(flip, -z, z)
    return mean + sd * z


def sample(mean, sd, lower, upper, rng: np.random.Generator, max_tries: int = 100):
    """Draw from N(mean, sd^2) restricted to (lower, upper), elementwise."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)
    out = np.empty_like(mean)
    mass = window_prob(mean, sd, lower, upper)
    todo = mass >= MIN_REJECTION_MASS
    if np.any(~todo):
        idx = ~todo
        out[idx] = _inverse_cdf(mean[idx], sd[idx], lower, upper, rng.random(idx.sum()))
    for _ in range(max_tries):
        if not todo.any():
            break
        draw = mean[todo] + sd[todo] * rng.standard_normal(todo.sum())
        ok = (draw > lower) & (draw < upper)
        idx = np.flatnonzero(todo)[ok]
        out[idx] = draw[ok]
        todo[idx] = False
    if todo.any():
        out[todo] = _inverse_cdf(mean[todo], sd[todo], lower, upper, rng.random(todo.sum()))
    return out
