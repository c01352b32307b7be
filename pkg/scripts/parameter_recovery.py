"""Interval coverage of the AR persistences over repeated simulated datasets.

Example: python scripts/parameter_recovery.py --n-datasets 10 --out results/recovery
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from _common import parse_config, write_results
from dppca.analysis import effective_sample_size, summarize_trace
from dppca.data import McmcConfig, PriorConfig, center_per_time
from dppca.ppca import fit_all_timepoints
from dppca.sampler import run_chain
from dppca.simulate import simulate_dppca


@dataclass
class RecoveryConfig:
    n_datasets: int = 10
    n: int = 20
    p: int = 30
    M: int = 8
    n_iterations: int = 20_000
    thin: int = 20
    burn_in: int = 2_000
    seed: int = 1000
    out: str = "results/parameter_recovery"


def main():
    cfg = parse_config(RecoveryConfig, __doc__.splitlines()[0])
    rows = []
    for r in range(cfg.n_datasets):
        ds, truth = simulate_dppca(n=cfg.n, p=cfg.p, M=cfg.M, q=2, rng=cfg.seed + r)
        ds = center_per_time(ds)
        t0 = time.perf_counter()
        mcmc = McmcConfig(n_iterations=cfg.n_iterations, thin=cfg.thin, burn_in_raw=cfg.burn_in, seed=r)
        chain = run_chain(ds, PriorConfig(), mcmc, fit_all_timepoints(ds, 2))
        seconds = time.perf_counter() - t0
        for name, trace, true in (("phi", chain.phi, truth.theta1.phi),
                                  ("Phi_1", chain.Phi[:, 0], truth.theta2.Phi[0]),
                                  ("Phi_2", chain.Phi[:, 1], truth.theta2.Phi[1])):
            s = summarize_trace(name, trace)
            rows.append({"dataset": r, "parameter": name, "truth": true, "mean": s.mean, "lower": s.lower,
                         "upper": s.upper, "covered": s.lower <= true <= s.upper,
                         "ess": effective_sample_size(trace), "seconds": seconds})
        print(f"dataset {r}: {seconds:.1f} s, acceptance {chain.acceptance}")
    coverage = {}
    for row in rows:
        coverage[row["parameter"]] = coverage.get(row["parameter"], 0) + int(row["covered"])
    out = write_results(cfg.out, cfg, rows, {"coverage": coverage, "n_datasets": cfg.n_datasets})
    print(f"coverage {coverage} of {cfg.n_datasets}; written to {out}")


if __name__ == "__main__":
    main()
