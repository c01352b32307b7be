"""Closed-form maximum-likelihood probabilistic PCA.

Used to initialise the sampler and as the Procrustes template that fixes
the rotation of every sampled loadings matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import LongitudinalDataset


class PpcaError(ValueError):
    pass


class SubspaceWarning(UserWarning):
    """The q-th and (q+1)-th eigenvalues coincide; the subspace is not unique."""


@dataclass(frozen=True, eq=False)
class PpcaFit:
    W_mle: np.ndarray  # (p, q)
    sigma2_mle: float
    eigvals: np.ndarray  # (p,), descending
    sample_cov: np.ndarray  # (p, p)

    @property
    def q(self) -> int:
        return self.W_mle.shape[1]

    def marginal_cov(self) -> np.ndarray:
        p = self.W_mle.shape[0]
        return self.W_mle @ self.W_mle.T + self.sigma2_mle * np.eye(p)

    def loglik(self, X: np.ndarray) -> float:
        """Gaussian log-likelihood of rows of ``X`` under N(0, W W^T + sigma^2 I)."""
        return gaussian_loglik(X, self.W_mle, self.sigma2_mle)


def gaussian_loglik(X, W, sigma2) -> float:
    n, p = X.shape
    C = W @ W.T + sigma2 * np.eye(p)
    L = np.linalg.cholesky(C)
    z = np.linalg.solve(L, X.T)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return float(-0.5 * (n * p * np.log(2 * np.pi) + n * logdet + (z * z).sum()))


def _sign_fix(W):
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[idx, np.arange(W.shape[1])])
    signs[signs == 0] = 1.0
    return W * signs


def fit_ppca(X, q: int, *, center_tol: float = 1e-8, tie_tol: float = 1e-10) -> PpcaFit:
    """Maximum-likelihood PPCA for column-centred data ``X`` (n x p).

    ``W = U_q (L_q - sigma^2 I)^{1/2}`` with ``sigma^2`` the mean of the
    discarded eigenvalues of the (1/n) sample covariance. When ``p > n`` the
    eigenvectors come from the n x n Gram matrix instead.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise PpcaError(f"X must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n < 2:
        raise PpcaError(f"need at least 2 observations, got {n}")
    if not 1 <= q < min(n - 1, p):
        raise PpcaError(f"q={q} must satisfy 1 <= q < min(n-1, p) = {min(n - 1, p)}")
    scale = max(1.0, float(np.abs(X).max()))
    col_means = X.mean(axis=0)
    if np.abs(col_means).max() > center_tol * scale:
        k = int(np.argmax(np.abs(col_means)))
        raise PpcaError(f"X is not column-centred (column {k} has mean {col_means[k]:.3g})")

    S = X.T @ X / n
    if p <= n:
        evals, evecs = np.linalg.eigh(S)
        order = np.argsort(evals)[::-1]
        evals = np.clip(evals[order], 0.0, None)
        Uq = evecs[:, order[:q]]
    else:
        G = X @ X.T / n
        gvals, gvecs = np.linalg.eigh(G)
        order = np.argsort(gvals)[::-1]
        gvals = np.clip(gvals[order], 0.0, None)
        evals = np.zeros(p)
        evals[:n] = gvals
        top = gvals[:q]
        if np.any(top <= 0):
            raise PpcaError("sample covariance has rank below q")
        Uq = X.T @ gvecs[:, order[:q]] / np.sqrt(n * top)

    sigma2 = float(evals[q:].mean())
    if sigma2 <= 0:
        raise PpcaError("noise variance estimate is zero; data lie in a q-dimensional subspace")
    gap = evals[q - 1] - evals[q]
    if gap <= tie_tol * max(1.0, evals[0]):
        warnings.warn(
            f"eigenvalues {q} and {q + 1} coincide ({evals[q - 1]:.6g}); "
            "principal subspace is not unique",
            SubspaceWarning,
            stacklevel=2,
        )
    W = Uq * np.sqrt(np.clip(evals[:q] - sigma2, 0.0, None))
    return PpcaFit(W_mle=_sign_fix(W), sigma2_mle=sigma2, eigvals=evals, sample_cov=S)


def fit_all_timepoints(ds: LongitudinalDataset, q: int) -> list[PpcaFit]:
    fits = []
    for m, Xm in enumerate(ds.by_time()):
        try:
            fits.append(fit_ppca(Xm, q))
        except PpcaError as exc:
            raise PpcaError(f"time {ds.time_labels[m]} (index {m}): {exc}") from None
    return fits


def projector(W) -> np.ndarray:
    """Orthogonal projector onto the column space of ``W``."""
    return W @ np.linalg.solve(W.T @ W, W.T)
