"""Conditional-consistency and grid-posterior checks for every sampler block.

Example: python scripts/sampler_checks.py --n-draws 100000
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from _common import parse_config, write_results  # noqa: E402
from _oracles import CONSISTENCY_BLOCKS, GRID_PARAMS, conditional_consistency, grid_check  # noqa: E402


@dataclass
class CheckConfig:
    n_pairs: int = 100
    n_draws: int = 100_000
    mh_steps: int = 60
    seed: int = 0
    out: str = "results/sampler_checks"


def main():
    cfg = parse_config(CheckConfig, __doc__.splitlines()[0])
    rows = []
    for block in CONSISTENCY_BLOCKS:
        err = conditional_consistency(block, cfg.n_pairs, cfg.seed)
        rows.append({"check": "consistency", "block": block, "mean_error": err, "ks": ""})
        print(f"consistency {block}: {err:.2e}")
    for param in GRID_PARAMS:
        me, ks = grid_check(param, cfg.n_draws, cfg.seed, mh_steps=cfg.mh_steps)
        rows.append({"check": "grid", "block": param, "mean_error": me, "ks": ks})
        print(f"grid {param}: mean error {me:.2e}, KS {ks:.4f}")
    out = write_results(cfg.out, cfg, rows, {})
    print(f"written to {out}")


if __name__ == "__main__":
    main()
