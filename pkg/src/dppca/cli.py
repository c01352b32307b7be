"""Command-line interface: ``dppca <subcommand> ...``.

Every subcommand writes CSV/JSON outputs plus a ``manifest.json`` (RunManifest)
naming config, seed, version, input digests, outputs and per-stage timings.
Exit codes: 0 success, 2 invalid configuration or arguments, 1 any other
failure; error messages are prefixed with the failing stage.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .analysis import rank_influential
from .chainio import load_chain
from .data import ConfigError, DataError, RunConfig, config_from_dict, load_config, load_dataset, prepare, write_dataset
from .lmm import LmmMcmc
from .pipeline import (
    RunManifest,
    Timer,
    fit_stage,
    group_seed,
    lmm_stage,
    ppc_stage,
    read_ranking_variables,
    run_group,
    write_comparison,
    write_diagnostics,
    write_ppca,
    write_ranking,
    write_trajectories,
)
from .simulate import simulate_dppca

log = logging.getLogger("dppca")


class StageError(Exception):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage


def _stage(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, StageError):
        raise
    except Exception as err:  # noqa: BLE001 - re-raised with the stage tag
        raise StageError(stage, err) from err


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, mcmc=replace(cfg.mcmc, seed=args.seed))
    if getattr(args, "scale", None):
        cfg = replace(cfg, data=replace(cfg.data, scale=args.scale))
    if getattr(args, "group_column", None):
        cfg = replace(cfg, data=replace(cfg.data, group_column=args.group_column))
    if getattr(args, "no_center", False):
        cfg = replace(cfg, data=replace(cfg.data, center=False))
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lmm_mcmc(args, seed: int) -> LmmMcmc:
    return LmmMcmc(n_iterations=args.lmm_iterations, thin=args.lmm_thin, burn_in=args.lmm_burn_in, seed=seed)


def _finish(manifest: RunManifest, out: Path) -> RunManifest:
    manifest.finalize()
    manifest.write(out / "manifest.json")
    return manifest


# subcommands -----------------------------------------------------------------


def cmd_simulate(args) -> RunManifest:
    out = _out(args)
    seed = 0 if args.seed is None else args.seed
    man = RunManifest("simulate", vars_for_manifest(args), seed)
    groups = None
    if args.groups:
        labels = [g for g in args.groups.split(",") if g]
        groups = [labels[i * len(labels) // args.n] for i in range(args.n)]
    with Timer(man, "simulate"):
        ds, truth = _stage("simulate", simulate_dppca, n=args.n, p=args.p, M=args.M, q=args.q,
                           loading_scheme=args.loading_scheme, rng=seed, groups=groups)
        data_path = out / "data.csv"
        write_dataset(ds, data_path, group_column=args.group_column or "group")
        truth_path = out / "ground_truth.json"
        truth.write_json(truth_path)
    man.add_outputs({"data": data_path, "ground_truth": truth_path})
    return _finish(man, out)


def cmd_ppca(args) -> RunManifest:
    cfg = _config(args)
    out = _out(args)
    man = RunManifest("ppca", asdict(cfg), None)
    _stage("load", man.add_input, args.data)
    with Timer(man, "ppca"):
        ds = _stage("load", load_dataset, args.data, group_column=cfg.data.group_column)
        ds = _stage("prepare", prepare, ds, center=cfg.data.center, scale=cfg.data.scale)
        man.add_outputs(_stage("ppca", write_ppca, ds, cfg.mcmc.q, out))
    return _finish(man, out)


def cmd_fit(args) -> RunManifest:
    cfg = _config(args)
    out = _out(args)
    man = RunManifest("fit", asdict(cfg), cfg.mcmc.seed)
    _stage("load", man.add_input, args.data)
    if args.config:
        _stage("load", man.add_input, args.config)
    ds = _stage("load", load_dataset, args.data, group_column=cfg.data.group_column)
    with Timer(man, "fit"):
        _, files = _stage("fit", fit_stage, ds, cfg, out / "chain", group=args.group)
    man.add_outputs(files, prefix="chain_")
    return _finish(man, out)


def cmd_diagnose(args) -> RunManifest:
    out = _out(args)
    chain = _stage("load", load_chain, args.chain)
    man = RunManifest("diagnose", {}, chain.config.seed)
    _stage("load", man.add_input, Path(args.chain) / "manifest.json")
    with Timer(man, "diagnose"):
        man.add_outputs(_stage("diagnose", write_diagnostics, chain, out))
    return _finish(man, out)


def cmd_rank(args) -> RunManifest:
    out = _out(args)
    chain = _stage("load", load_chain, args.chain)
    man = RunManifest("rank", {"k": args.k, "component": args.component}, chain.config.seed)
    _stage("load", man.add_input, Path(args.chain) / "manifest.json")
    with Timer(man, "rank"):
        ranking = _stage("rank", rank_influential, chain, k=args.k, component=args.component)
        path = write_ranking(ranking, chain.meta["variable_names"], chain.meta["time_labels"], out / "ranking.csv")
    man.add_outputs({"ranking": path})
    return _finish(man, out)


def cmd_trajectories(args) -> RunManifest:
    out = _out(args)
    chain = _stage("load", load_chain, args.chain)
    man = RunManifest("trajectories", {}, chain.config.seed)
    _stage("load", man.add_input, Path(args.chain) / "manifest.json")
    with Timer(man, "trajectories"):
        path = _stage("trajectories", write_trajectories, chain, out / "trajectories.csv")
    man.add_outputs({"trajectories": path})
    return _finish(man, out)


def cmd_ppc(args) -> RunManifest:
    out = _out(args)
    chain = _stage("load", load_chain, args.chain)
    seed = chain.config.seed if args.seed is None else args.seed
    man = RunManifest("ppc", {"n_reps": args.n_reps, "threshold": args.threshold}, seed)
    _stage("load", man.add_input, args.data)
    _stage("load", man.add_input, Path(args.chain) / "manifest.json")
    group_column = args.group_column or chain.meta.get("data", {}).get("group_column", "group")
    ds = _stage("load", load_dataset, args.data, group_column=group_column)
    with Timer(man, "ppc"):
        _, files = _stage("ppc", ppc_stage, chain, ds, out, args.n_reps, args.threshold, seed)
    man.add_outputs(files)
    return _finish(man, out)


def cmd_lmm(args) -> RunManifest:
    out = _out(args)
    seed = 0 if args.seed is None else args.seed
    mc = _lmm_mcmc(args, seed)
    man = RunManifest("lmm", {"lmm": asdict(mc), "group": args.group}, seed)
    _stage("load", man.add_input, args.data)
    _stage("load", man.add_input, args.ranking)
    ds = _stage("load", load_dataset, args.data, group_column=args.group_column or "group")
    variables = _stage("load", read_ranking_variables, args.ranking)
    with Timer(man, "lmm"):
        _, files = _stage("lmm", lmm_stage, ds, variables, out, mc, group=args.group)
    man.add_outputs(files)
    return _finish(man, out)


def cmd_pipeline(args) -> RunManifest:
    cfg = _config(args)
    out = _out(args)
    man = RunManifest("pipeline", asdict(cfg), cfg.mcmc.seed)
    _stage("load", man.add_input, args.data)
    if args.config:
        _stage("load", man.add_input, args.config)
    ds = _stage("load", load_dataset, args.data, group_column=cfg.data.group_column)
    labels = [g for g in ds.groups if g != ""]
    if args.groups:
        wanted = [g for g in args.groups.split(",") if g]
        missing = [g for g in wanted if g not in labels]
        if missing:
            raise StageError("pipeline", DataError(f"group labels not found: {missing}"))
        labels = wanted
    if not labels:
        raise StageError("pipeline", DataError(f"no group labels in column {cfg.data.group_column!r}"))
    for g in labels:
        if not g.replace("-", "").replace("_", "").isalnum():
            raise StageError("pipeline", DataError(f"group label {g!r} is not usable in a file name"))

    tasks = []
    for idx, g in enumerate(labels):
        s = group_seed(cfg.mcmc.seed, idx + 1)
        gcfg = replace(cfg, mcmc=replace(cfg.mcmc, seed=s))
        tasks.append((ds, gcfg, g, out / f"group_{g}", args.top_k, args.n_reps, args.threshold,
                      _lmm_mcmc(args, s)))

    with Timer(man, "groups"):
        if args.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(args.jobs, len(tasks))) as pool:
                results = list(pool.map(run_group, tasks))
        else:
            results = [_stage(f"group {t[2]}", run_group, t) for t in tasks]
    for r in results:
        man.add_outputs(r["files"], prefix=f"group_{r['label']}_")
        for stage, secs in r["clock"].items():
            man.wall_clock[f"group_{r['label']}_{stage}"] = round(secs, 3)

    with Timer(man, "compare"):
        for i in range(len(results)):
            for j in range(i + 1, len(results)):
                a, b = results[i], results[j]
                path = write_comparison(a["lmm_fits"], b["lmm_fits"], (a["label"], b["label"]),
                                        out / f"comparison_{a['label']}_vs_{b['label']}.csv")
                man.add_outputs({f"comparison_{a['label']}_vs_{b['label']}": path})

    if not args.skip_combined:
        ccfg = replace(cfg, mcmc=replace(cfg.mcmc, seed=group_seed(cfg.mcmc.seed, 0)))
        with Timer(man, "combined_fit"):
            chain, files = _stage("combined fit", fit_stage, ds, ccfg, out / "combined" / "chain")
        man.add_outputs(files, prefix="combined_chain_")
        with Timer(man, "trajectories"):
            path = _stage("trajectories", write_trajectories, chain, out / "combined" / "trajectories.csv")
        man.add_outputs({"combined_trajectories": path})
    man.extra["groups"] = labels
    return _finish(man, out)


def vars_for_manifest(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dppca", description="Dynamic probabilistic PCA for longitudinal data.")
    p.add_argument("--version", action="version", version=f"dppca {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--group-column", default=None)
        if config:
            sp.add_argument("--config", default=None, help="JSON config with prior/mcmc/data sections")
            sp.add_argument("--scale", choices=["none", "unit-variance"], default=None,
                            help="per-time scaling after centring")
            sp.add_argument("--no-center", action="store_true", help="skip per-time centring")

    def lmm_opts(sp):
        d = LmmMcmc()
        sp.add_argument("--lmm-iterations", type=int, default=d.n_iterations)
        sp.add_argument("--lmm-thin", type=int, default=d.thin)
        sp.add_argument("--lmm-burn-in", type=int, default=d.burn_in)

    sp = sub.add_parser("simulate", help="simulate a dataset and its ground truth")
    common(sp, config=False)
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--p", type=int, default=30)
    sp.add_argument("--M", type=int, default=8)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--loading-scheme", choices=["fixed", "rotating"], default="fixed")
    sp.add_argument("--groups", default=None, help="comma-separated labels; observations split evenly")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ppca", help="per-time PPCA maximum likelihood estimates")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.set_defaults(func=cmd_ppca)

    sp = sub.add_parser("fit", help="run the MCMC sampler and identify the chain")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--group", default=None, help="fit only this group label")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("diagnose", help="posterior summaries, traces and ACFs")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("rank", help="top-k variables by |loading| per time point")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--component", type=int, default=0)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("trajectories", help="time-aligned posterior mean scores")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_trajectories)

    sp = sub.add_parser("ppc", help="posterior predictive covariance check")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--group-column", default=None)
    sp.add_argument("--n-reps", type=int, default=100)
    sp.add_argument("--threshold", type=float, default=1.0)
    sp.set_defaults(func=cmd_ppc)

    sp = sub.add_parser("lmm", help="mixed-model follow-up on ranked variables")
    sp.add_argument("--ranking", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--group-column", default=None)
    sp.add_argument("--group", default=None)
    lmm_opts(sp)
    sp.set_defaults(func=cmd_lmm)

    sp = sub.add_parser("pipeline", help="per-group fits, reports, LMMs and a combined fit")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--groups", default=None, help="comma-separated subset of group labels")
    sp.add_argument("--top-k", type=int, default=5)
    sp.add_argument("--n-reps", type=int, default=100)
    sp.add_argument("--threshold", type=float, default=1.0)
    sp.add_argument("--skip-combined", action="store_true")
    lmm_opts(sp)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except ConfigError as err:
        print(f"[config] {err}", file=sys.stderr)
        return 2
    except StageError as err:
        print(str(err), file=sys.stderr)
        return 1
    except (DataError, OSError, ValueError) as err:
        print(f"[{args.command}] {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
