"""Synthetic longitudinal data drawn from the dynamic PPCA model."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .data import LongitudinalDataset
from .sv import SvScalarParams, SvVectorParams, simulate_sv_path

LOADING_SCHEMES = ("fixed", "rotating")


@dataclass(eq=False)
class GroundTruth:
    W: np.ndarray  # (M, p, q)
    theta1: SvScalarParams
    theta2: SvVectorParams
    eta: np.ndarray  # (M,)
    lam: np.ndarray  # (M, q)
    U: np.ndarray  # (M, n, q)
    seed: int | None = None
    mean_trend: np.ndarray | None = None  # (M, p)
    extra: dict = field(default_factory=dict)

    def model_cov(self, m: int) -> np.ndarray:
        """W_m diag(exp(lambda_m)) W_m^T + exp(eta_m) I."""
        W = self.W[m]
        return (W * np.exp(self.lam[m])) @ W.T + np.exp(self.eta[m]) * np.eye(W.shape[0])

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "theta1": {"nu": self.theta1.nu, "phi": self.theta1.phi, "v2": self.theta1.v2},
            "theta2": {
                "mu": self.theta2.mu.tolist(),
                "Phi": self.theta2.Phi.tolist(),
                "V": self.theta2.V.tolist(),
            },
            "eta": self.eta.tolist(),
            "lambda": self.lam.tolist(),
            "W": self.W.tolist(),
        }
        if self.mean_trend is not None:
            out["mean_trend"] = self.mean_trend.tolist()
        out.update(self.extra)
        return out

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def random_orthonormal(p: int, q: int, rng) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((p, q)))
    return Q * np.sign(np.diag(R))


def loading_path(p, q, M, rng, scheme="fixed", scale=1.0, angle_per_step=0.1) -> np.ndarray:
    W0 = random_orthonormal(p, q, rng) * scale
    if scheme == "fixed":
        return np.repeat(W0[None], M, axis=0)
    if scheme == "rotating":
        A = rng.standard_normal((p, p))
        A = (A - A.T) / 2
        A *= angle_per_step / np.linalg.norm(A, 2)
        step = expm(A)
        out = [W0]
        for _ in range(M - 1):
            out.append(step @ out[-1])
        return np.stack(out)
    raise ValueError(f"unknown loading scheme {scheme!r}; choose from {LOADING_SCHEMES}")


def default_params(q: int = 2):
    """Desk-scale truth: persistence 0.8 everywhere, innovation variances 0.1."""
    mu = np.array([1.0, 0.5])[:q] if q <= 2 else np.linspace(1.0, 0.0, q)
    return SvScalarParams(nu=-1.0, phi=0.8, v2=0.1), SvVectorParams(mu=mu, Phi=np.full(q, 0.8), V=np.full(q, 0.1))


def simulate_dppca(
    n: int = 20,
    p: int = 30,
    M: int = 8,
    q: int = 2,
    theta1: SvScalarParams | None = None,
    theta2: SvVectorParams | None = None,
    loading_scheme: str = "fixed",
    rng: np.random.Generator | int | None = None,
    *,
    loading_scale: float = 1.0,
    groups=None,
    mean_trend=None,
    W=None,
):
    """Draw a dataset and its generating values.

    ``groups`` gives one label per observation (default: all ``"all"``);
    ``mean_trend`` is an optional (M, p) array added to every observation,
    used to plant time-evolving variables.
    """
    if not 1 <= q < min(n, p):
        raise ValueError(f"q={q} must satisfy 1 <= q < min(n, p)={min(n, p)}")
    if M < 2:
        raise ValueError("need at least 2 time points")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    d1, d2 = default_params(q)
    theta1 = theta1 or d1
    theta2 = theta2 or d2
    if theta2.q != q:
        raise ValueError(f"theta2 has dimension {theta2.q}, expected q={q}")

    eta = simulate_sv_path(theta1, M, rng)
    lam = simulate_sv_path(theta2, M, rng)
    if W is None:
        W = loading_path(p, q, M, rng, loading_scheme, loading_scale)
    W = np.asarray(W, dtype=float)
    U = rng.standard_normal((M, n, q)) * np.exp(lam / 2)[:, None, :]
    E = rng.standard_normal((M, n, p)) * np.exp(eta / 2)[:, None, None]
    X = U @ W.transpose(0, 2, 1) + E
    if mean_trend is not None:
        mean_trend = np.asarray(mean_trend, dtype=float)
        X = X + mean_trend[:, None, :]
    if groups is None:
        groups = ("all",) * n
    width = len(str(n))
    ds = LongitudinalDataset(
        values=X.transpose(1, 0, 2),
        obs_ids=tuple(f"obs{i + 1:0{width}d}" for i in range(n)),
        group=tuple(groups),
        variable_names=tuple(f"v{k + 1}" for k in range(p)),
        time_labels=tuple(str(m + 1) for m in range(M)),
    )
    truth = GroundTruth(W=W, theta1=theta1, theta2=theta2, eta=eta, lam=lam, U=U, seed=seed,
                        mean_trend=mean_trend)
    return ds, truth
