"""Pipeline stages writing CSV/JSON reports, plus the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import InfluenceRanking, PpcReport, posterior_predictive_check, rank_influential, summarize
from .chainio import save_chain
from .data import LongitudinalDataset, RunConfig, prepare, subset_by_group
from .identification import identify_chain, unify_timepoints
from .lmm import LmmFit, LmmMcmc, backwards_select, compare_groups
from .ppca import fit_all_timepoints
from .sampler import PosteriorChain, run_chain

NUM = "{:.10g}"


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str = __version__
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: dict = field(default_factory=dict)  # name -> path
    output_digests: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)  # stage -> seconds
    extra: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256(path)

    def add_outputs(self, files: dict, prefix: str = "") -> None:
        for name, path in files.items():
            self.outputs[f"{prefix}{name}"] = str(path)

    def finalize(self) -> None:
        self.output_digests = {k: sha256(v) for k, v in sorted(self.outputs.items())}

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True), encoding="utf-8")


class Timer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest, self.stage = manifest, stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.wall_clock[self.stage] = round(time.perf_counter() - self.t0, 3)
        return False


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([NUM.format(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def dataset_meta(ds: LongitudinalDataset) -> dict:
    return {
        "obs_ids": list(ds.obs_ids),
        "group": list(ds.group),
        "variable_names": list(ds.variable_names),
        "time_labels": list(ds.time_labels),
    }


# stages ----------------------------------------------------------------------


def fit_stage(ds_raw: LongitudinalDataset, cfg: RunConfig, out_dir, group: str | None = None,
              identify: bool = True) -> tuple[PosteriorChain, dict]:
    """Centre, initialise from per-time PPCA, sample, identify, save the chain."""
    ds = ds_raw if group is None else subset_by_group(ds_raw, group)
    ds = prepare(ds, center=cfg.data.center, scale=cfg.data.scale)
    fits = fit_all_timepoints(ds, cfg.mcmc.q)
    chain = run_chain(ds, cfg.prior, cfg.mcmc, fits)
    if identify:
        chain = identify_chain(chain, fits)
    chain.meta.update(dataset_meta(ds))
    chain.meta["data"] = asdict(cfg.data)
    chain.meta["group_subset"] = group
    files = save_chain(chain, Path(out_dir))
    return chain, files


def write_ppca(ds: LongitudinalDataset, q: int, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fits = fit_all_timepoints(ds, q)
    load_rows, sig_rows = [], []
    for m, f in enumerate(fits):
        sig_rows.append([ds.time_labels[m], float(f.sigma2_mle)])
        for k in range(ds.p):
            load_rows.append([ds.time_labels[m], ds.variable_names[k], *map(float, f.W_mle[k])])
    return {
        "ppca_loadings": _write_csv(out / "ppca_loadings.csv",
                                    ["time", "variable", *[f"PC{j + 1}" for j in range(q)]], load_rows),
        "ppca_sigma2": _write_csv(out / "ppca_sigma2.csv", ["time", "sigma2"], sig_rows),
    }


def write_diagnostics(chain: PosteriorChain, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries = summarize(chain)
    traces = chain.scalar_params()
    names = list(traces)
    files = {
        "summary": _write_csv(
            out / "summary.csv",
            ["parameter", "mean", "ci_lower", "ci_upper", "ess", "report"],
            [[s.name, s.mean, s.lower, s.upper, s.ess, s.format()] for s in summaries],
        ),
        "trace": _write_csv(out / "trace.csv", ["sample", *names],
                            [[i, *map(float, row)] for i, row in enumerate(np.column_stack(list(traces.values())))]),
    }
    lags = len(summaries[0].acf)
    files["acf"] = _write_csv(out / "acf.csv", ["lag", *names],
                              [[k, *(float(s.acf[k]) for s in summaries)] for k in range(lags)])
    return files


def write_ranking(ranking: InfluenceRanking, variable_names, time_labels, path) -> Path:
    rows = [[time_labels[e.time_index], e.rank, e.variable, variable_names[e.variable], e.mean, e.lower, e.upper,
             int(e.ci_excludes_zero)] for e in ranking.entries]
    return _write_csv(path, ["time", "rank", "variable_index", "variable", "loading_mean", "ci_lower", "ci_upper",
                             "ci_excludes_zero"], rows)


def read_ranking_variables(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(dict.fromkeys(row["variable"] for row in csv.DictReader(fh)))


def write_trajectories(chain: PosteriorChain, path) -> Path:
    W_mean = chain.W.mean(axis=0)
    U_mean = chain.U.mean(axis=0)
    _, U_al, _ = unify_timepoints(W_mean, U_mean)
    meta = chain.meta
    q = U_al.shape[2]
    rows = []
    for i, obs in enumerate(meta["obs_ids"]):
        for m, t in enumerate(meta["time_labels"]):
            rows.append([obs, meta["group"][i], t, *map(float, U_al[m, i])])
    return _write_csv(path, ["obs_id", "group", "time", *[f"PC{j + 1}" for j in range(q)]], rows)


def write_ppc(report: PpcReport, time_labels, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "ppc_mads": _write_csv(out / "ppc_mads.csv", ["replicate", "draw", "time", "mad"],
                               [[r, int(report.draw_indices[r]), time_labels[m], float(report.mads[r, m])]
                                for r in range(report.mads.shape[0]) for m in range(report.mads.shape[1])]),
        "ppc_histogram": _write_csv(out / "ppc_histogram.csv", ["bin_lower", "bin_upper", "count"],
                                    [[float(report.bin_edges[b]), float(report.bin_edges[b + 1]),
                                      int(report.counts[b])] for b in range(len(report.counts))]),
    }
    summary = {"threshold": report.threshold, "fraction_above": report.fraction_above,
               "n_mads": int(report.mads.size)}
    files["ppc"] = out / "ppc.json"
    files["ppc"].write_text(json.dumps(summary, indent=1, sort_keys=True), encoding="utf-8")
    return files


def ppc_stage(chain: PosteriorChain, ds_raw: LongitudinalDataset, out_dir, n_reps: int, threshold: float,
              seed: int) -> tuple[PpcReport, dict]:
    group = chain.meta.get("group_subset")
    ds = ds_raw if group is None else subset_by_group(ds_raw, group)
    data_cfg = chain.meta.get("data", {})
    ds = prepare(ds, center=data_cfg.get("center", True), scale=data_cfg.get("scale"))
    report = posterior_predictive_check(chain, ds, n_reps=n_reps, threshold=threshold, rng=seed)
    return report, write_ppc(report, ds.time_labels, out_dir)


def lmm_stage(ds_raw: LongitudinalDataset, variables, out_dir, mcmc: LmmMcmc, group: str | None = None,
              prefix: str = "lmm") -> tuple[list[LmmFit], dict]:
    """Backwards-selected LMM per variable on the uncentred profiles."""
    ds = ds_raw if group is None else subset_by_group(ds_raw, group)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name_to_idx = {v: k for k, v in enumerate(ds.variable_names)}
    fits = []
    for v in variables:
        k = name_to_idx[v] if v in name_to_idx else int(v)
        fits.append(backwards_select(ds.raw_values()[:, :, k], mcmc=mcmc, variable=ds.variable_names[k]))
    fits_path = out / f"{prefix}_fits.json"
    fits_path.write_text(json.dumps([f.to_dict() for f in fits], indent=1, sort_keys=True), encoding="utf-8")
    traj = _write_csv(out / f"{prefix}_trajectories.csv", ["variable", "time", "predicted", "degree", "evolving"],
                      [[f.variable, t, float(f.trajectory[m]), f.degree, int(f.evolves_over_time)]
                       for f in fits for m, t in enumerate(ds.time_labels)])
    return fits, {f"{prefix}_fits": fits_path, f"{prefix}_trajectories": traj}


def write_comparison(fits_a, fits_b, labels, path) -> Path:
    rows = compare_groups(fits_a, fits_b, labels)
    header = list(rows[0]) if rows else ["variable", "status"]
    return _write_csv(path, header, [[r[h] if r[h] is not None else "" for h in header] for r in rows])


def group_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_group(args) -> dict:
    """One per-group branch of the pipeline; top-level so process pools can pickle it."""
    ds_raw, cfg, label, out_dir, top_k, n_reps, threshold, lmm_mcmc = args
    out = Path(out_dir)
    files, clock = {}, {}
    t0 = time.perf_counter()
    chain, f = fit_stage(ds_raw, cfg, out / "chain", group=label)
    files.update({f"chain_{k}": v for k, v in f.items()})
    clock["fit"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    files.update(write_diagnostics(chain, out))
    ranking = rank_influential(chain, k=top_k)
    files["ranking"] = write_ranking(ranking, chain.meta["variable_names"], chain.meta["time_labels"],
                                     out / "ranking.csv")
    clock["diagnose_rank"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    variables = [chain.meta["variable_names"][v] for v in ranking.union]
    fits, f = lmm_stage(ds_raw, variables, out, lmm_mcmc, group=label)
    files.update(f)
    clock["lmm"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    _, f = ppc_stage(chain, ds_raw, out, n_reps, threshold, cfg.mcmc.seed)
    files.update(f)
    clock["ppc"] = time.perf_counter() - t0
    return {"label": label, "files": {k: str(v) for k, v in files.items()}, "clock": clock,
            "lmm_fits": fits}
