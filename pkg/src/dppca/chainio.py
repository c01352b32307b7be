"""Chain directories: one CSV table per parameter block plus ``manifest.json``."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import McmcConfig, PriorConfig, StepScales
from .sampler import PosteriorChain

FMT = "%.17g"
MANIFEST = "manifest.json"


def write_table(path, columns: list[str], rows: np.ndarray) -> None:
    rows = np.asarray(rows, dtype=float)
    sample = np.arange(rows.shape[0])[:, None]
    np.savetxt(path, np.hstack([sample, rows]), fmt=[*["%d"], *[FMT] * rows.shape[1]], delimiter=",",
               header=",".join(["sample", *columns]), comments="")


def read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header[1:], data[:, 1:]


def _theta_columns(q):
    return ["nu", "phi", "v2", *[f"mu_{j + 1}" for j in range(q)], *[f"Phi_{j + 1}" for j in range(q)],
            *[f"V_{j + 1}" for j in range(q)], "log_posterior"]


def save_chain(chain: PosteriorChain, out_dir, extra_meta: dict | None = None) -> dict:
    """Write the chain; returns a {name: path} map of the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, M, p, q = chain.dims
    S = len(chain)
    files = {}

    theta = np.column_stack([chain.nu, chain.phi, chain.v2, chain.mu, chain.Phi, chain.V,
                             chain.log_posterior_trace])
    files["theta"] = out / "theta.csv"
    write_table(files["theta"], _theta_columns(q), theta)
    files["eta"] = out / "eta.csv"
    write_table(files["eta"], [f"eta_{m + 1}" for m in range(M)], chain.eta)
    files["lambda"] = out / "lambda.csv"
    write_table(files["lambda"], [f"lambda_{j + 1}_{m + 1}" for m in range(M) for j in range(q)],
                chain.lam.reshape(S, -1))
    files["loadings"] = out / "loadings.csv"
    write_table(files["loadings"],
                [f"W_{m + 1}_{k + 1}_{j + 1}" for m in range(M) for k in range(p) for j in range(q)],
                chain.W.reshape(S, -1))
    files["scores"] = out / "scores.csv"
    write_table(files["scores"],
                [f"u_{m + 1}_{i + 1}_{j + 1}" for m in range(M) for i in range(n) for j in range(q)],
                chain.U.reshape(S, -1))
    if chain.rotations is not None:
        files["rotations"] = out / "rotations.csv"
        write_table(files["rotations"],
                    [f"R_{m + 1}_{a + 1}_{b + 1}" for m in range(M) for a in range(q) for b in range(q)],
                    chain.rotations.reshape(S, -1))

    manifest = {
        "dims": {"n": n, "M": M, "p": p, "q": q, "samples": S},
        "mcmc": asdict(chain.config),
        "prior": asdict(chain.prior),
        "seed": chain.config.seed,
        "acceptance": chain.acceptance,
        "identified": chain.rotations is not None,
        "files": {k: v.name for k, v in files.items()},
        **chain.meta,
        **(extra_meta or {}),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    files["manifest"] = out / MANIFEST
    return files


def load_chain(chain_dir) -> PosteriorChain:
    d = Path(chain_dir)
    manifest = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
    dims = manifest["dims"]
    n, M, p, q, S = dims["n"], dims["M"], dims["p"], dims["q"], dims["samples"]
    _, theta = read_table(d / "theta.csv")
    _, eta = read_table(d / "eta.csv")
    _, lam = read_table(d / "lambda.csv")
    _, W = read_table(d / "loadings.csv")
    _, U = read_table(d / "scores.csv")
    rotations = None
    if manifest.get("identified"):
        _, R = read_table(d / "rotations.csv")
        rotations = R.reshape(S, M, q, q)
    mc = dict(manifest["mcmc"])
    mc["mh_step_scales"] = StepScales(**mc["mh_step_scales"])
    reserved = {"dims", "mcmc", "prior", "seed", "acceptance", "identified", "files"}
    return PosteriorChain(
        W=W.reshape(S, M, p, q),
        U=U.reshape(S, M, n, q),
        eta=eta,
        lam=lam.reshape(S, M, q),
        nu=theta[:, 0],
        phi=theta[:, 1],
        v2=theta[:, 2],
        mu=theta[:, 3:3 + q],
        Phi=theta[:, 3 + q:3 + 2 * q],
        V=theta[:, 3 + 2 * q:3 + 3 * q],
        log_posterior_trace=theta[:, -1],
        acceptance=manifest["acceptance"],
        config=McmcConfig(**mc),
        prior=PriorConfig(**manifest["prior"]),
        rotations=rotations,
        meta={k: v for k, v in manifest.items() if k not in reserved},
    )
