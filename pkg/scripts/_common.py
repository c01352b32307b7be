"""Shared helpers: dataclass configs with command-line overrides and result writing."""

from __future__ import annotations

import argparse
import csv
import json
from dataclasses import asdict, fields
from pathlib import Path


def parse_config(cls, description: str):
    """Build an argparse parser from the fields of dataclass ``cls`` and return an instance."""
    parser = argparse.ArgumentParser(description=description)
    for f in fields(cls):
        parser.add_argument(f"--{f.name.replace('_', '-')}", type=type(f.default), default=f.default)
    return cls(**vars(parser.parse_args()))


def write_results(out_dir, config, rows: list[dict], summary: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if rows:
        with open(out / "results.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    (out / "summary.json").write_text(json.dumps({"config": asdict(config), **summary}, indent=2))
    return out
