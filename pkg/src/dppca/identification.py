"""Rotational identification of sampled loadings.

Each retained loadings matrix is rotated onto the PPCA maximum-likelihood
template of its time point; the scores receive the inverse rotation so that
every reconstruction ``W u`` is unchanged. For trajectories, time points are
additionally rotated onto the first one.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import replace

import numpy as np

from .ppca import PpcaFit


class RankDeficientWarning(UserWarning):
    pass


def _procrustes_batch(A, T):
    """Rotations R (..., q, q) minimising ||A R - T||_F for stacks of p x q matrices."""
    C = np.swapaxes(A, -1, -2) @ T
    U, s, Vt = np.linalg.svd(C)
    return U @ Vt, s


def procrustes_rotation(A, template) -> np.ndarray:
    """Orthogonal ``R`` minimising ``||A R - template||_F`` (reflections allowed)."""
    A = np.asarray(A, dtype=float)
    T = np.asarray(template, dtype=float)
    if A.shape != T.shape or A.ndim != 2:
        raise ValueError(f"shapes {A.shape} and {T.shape} must be equal p x q")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(T))):
        raise ValueError("inputs must be finite")
    R, s = _procrustes_batch(A, T)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        warnings.warn("A^T template is rank deficient; rotation is not unique", RankDeficientWarning, stacklevel=2)
    return R


def signed_permutations(q: int):
    for perm in itertools.permutations(range(q)):
        for signs in itertools.product((1.0, -1.0), repeat=q):
            R = np.zeros((q, q))
            R[list(perm), range(q)] = signs
            yield R


def signed_permutation_rotation(A, template) -> np.ndarray:
    """Best signed permutation ``R`` for ``A R ~ template``; brute force over q! 2^q."""
    A = np.asarray(A, dtype=float)
    T = np.asarray(template, dtype=float)
    best, best_err = None, np.inf
    for R in signed_permutations(A.shape[1]):
        err = np.sum((A @ R - T) ** 2)
        if err < best_err - 1e-15:
            best, best_err = R, err
    return best


def chain_rotations(W, templates, mode: str = "orthogonal") -> np.ndarray:
    """Per-sample, per-time rotations (S, M, q, q) mapping W[s, m] onto templates[m]."""
    T = np.stack([t.W_mle if isinstance(t, PpcaFit) else np.asarray(t) for t in templates])
    if T.shape != W.shape[1:]:
        raise ValueError(f"template shape {T.shape} does not match loadings {W.shape[1:]}")
    if mode == "orthogonal":
        R, _ = _procrustes_batch(W, T[None])
        return R
    if mode == "signed-permutation":
        S, M = W.shape[:2]
        return np.array([[signed_permutation_rotation(W[s, m], T[m]) for m in range(M)] for s in range(S)])
    raise ValueError(f"unknown identification mode {mode!r}")


def identify_chain(chain, templates, mode: str = "orthogonal"):
    """Rotate every sampled W_m onto its template and counter-rotate the scores.

    The log-volatilities are left as sampled.
    """
    R = chain_rotations(chain.W, templates, mode)
    W = chain.W @ R
    # u -> R^T u for column vectors, i.e. U @ R for row-stacked scores
    U = chain.U @ R
    prev = chain.rotations
    total = R if prev is None else prev @ R
    return replace(chain, W=W, U=U, rotations=total)


def loading_dispersion(W, m: int | None = None) -> float:
    """Trace of the sample covariance of vec(W_m) across samples (summed over m if None)."""
    ms = range(W.shape[1]) if m is None else [m]
    total = 0.0
    for mm in ms:
        flat = W[:, mm].reshape(W.shape[0], -1)
        total += float(flat.var(axis=0, ddof=1).sum())
    return total


def unify_timepoints(W_mean, U_mean, mode: str = "orthogonal"):
    """Rotate W_m (m > 1) onto W_1 and apply the same rotation to the scores.

    ``W_mean`` is (M, p, q), ``U_mean`` is (M, n, q). Returns aligned copies and
    the rotations (M, q, q), the first being the identity.
    """
    W_mean = np.asarray(W_mean, dtype=float)
    U_mean = np.asarray(U_mean, dtype=float)
    M, p, q = W_mean.shape
    R = np.empty((M, q, q))
    R[0] = np.eye(q)
    for m in range(1, M):
        if mode == "signed-permutation":
            R[m] = signed_permutation_rotation(W_mean[m], W_mean[0])
        else:
            R[m], _ = _procrustes_batch(W_mean[m], W_mean[0])
    return W_mean @ R, U_mean @ R, R
