"""Command-line interface.

Subcommands: simulate, fit, score, evaluate, sweep, validate. Each one resolves
its options into a versioned config dict (optionally seeded from ``--config``,
a JSON or YAML file) and hands it to the matching ``cmd_*`` function. Exit codes:
0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

import yaml

from . import __version__
from . import calibration as C
from . import protocol as P
from . import sim
from .errors import InputError, QuadError
from .io import IngestFilters, ingest, write_dataset
from .metrics import EvalReport, render_table
from .types import Dataset, QuerySet, validate_dataset

log = logging.getLogger("quadcal")

CONFIG_VERSION = 1


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _filters(cfg: dict) -> IngestFilters:
    short = cfg.get("min_short_side", 256)
    return IngestFilters(
        min_short_side=short if short and short > 0 else None,
        dedup_checksum=not cfg.get("no_dedup", False),
        min_instances=int(cfg.get("min_instances", 10)),
    )


def _load(path, cfg: dict) -> Dataset:
    ds, report = ingest(path, _filters(cfg))
    log.info("%s: %s", path, report.summary())
    return ds


def _write_text(path, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def cmd_simulate(cfg: dict) -> dict:
    """Write a simulated dataset and, unless disabled, one tree manifest per source."""
    out = Path(cfg["out"])
    n_real, n_fake, seed = int(cfg["n_real"]), int(cfg["n_fake"]), int(cfg["seed"])
    if n_real < 0 or n_fake < 0 or n_real + n_fake == 0:
        raise InputError("need a positive number of sources")
    obs = sim.observation_config_from_dict(cfg.get("observation") or {})
    tree_cfg = sim.TreeConfig(branching=tuple(cfg.get("branching") or sim.TreeConfig().branching))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out}: {exc}") from exc

    write_manifests = not cfg.get("no_manifests", False)
    if write_manifests:
        (out / "manifests").mkdir(exist_ok=True)
    sets = []
    for sid, label in sim.source_ids(n_real, n_fake):
        tree = sim.generate_tree(sid, label, seed, tree_cfg, weights=obs.severity_weights)
        recs = sim.simulate_observations(tree, label, obs)
        sets.append(QuerySet(sid, tuple(recs), label))
        if write_manifests:
            _write_text(out / "manifests" / f"{sid}.json", tree.to_json() + "\n")
    ds = Dataset(tuple(sets))
    data_path = out / f"dataset.{cfg.get('format', 'csv')}"
    try:
        write_dataset(ds, data_path)
    except OSError as exc:
        raise InputError(f"cannot write {data_path}: {exc}") from exc
    summary = {"sources": len(ds), "instances": ds.n_instances, "dataset": str(data_path),
               "config_digest": config_digest(cfg), "config": cfg}
    _write_text(out / "simulate.json", json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    print(f"sources: {len(ds)}  instances: {ds.n_instances}  -> {data_path}")
    return summary


def cmd_fit(cfg: dict) -> C.CalibrationModel:
    """Fit a calibration model on the development split of a labeled dataset."""
    ds = _load(cfg["data"], cfg)
    if len(ds) == 0:
        raise InputError("dataset is empty after filtering")
    if not ds.is_labeled:
        raise InputError("fit requires labeled data: some sources have no label")
    split = float(cfg.get("split", 0.5))
    if split >= 1.0:
        dev_ids, eval_ids = sorted(ds.source_ids), []
    else:
        dev_ids, eval_ids = P.split_sources(ds, split, int(cfg.get("seed", 0)))
    t0 = time.perf_counter()
    model = C.fit(ds.subset(dev_ids), C.FitConfig(model_order=int(cfg.get("order", 1))))
    model.fit_meta.update({
        "dev_source_ids": dev_ids,
        "n_eval_sources": len(eval_ids),
        "split": split,
        "seed": int(cfg.get("seed", 0)),
        "fit_seconds": round(time.perf_counter() - t0, 4),
        "config_digest": config_digest(cfg),
    })
    try:
        model.save(cfg["out"])
    except OSError as exc:
        raise InputError(f"cannot write {cfg['out']}: {exc}") from exc
    log.info("fit_meta: %s", {k: v for k, v in model.fit_meta.items() if k != "dev_source_ids"})
    print(f"fitted on {len(dev_ids)} dev sources ({model.fit_meta['real']['n']} real / "
          f"{model.fit_meta['fake']['n']} fake instances) -> {cfg['out']}")
    return model


def _eval_subset(ds: Dataset, model: Optional[C.CalibrationModel], cfg: dict) -> Dataset:
    if model is None or cfg.get("all_sources"):
        return ds
    dev = model.fit_meta.get("dev_source_ids") or []
    return ds.exclude(dev)


def cmd_score(cfg: dict) -> list[dict]:
    """Per-source QuAD scores; writes CSV when ``out`` is set."""
    ds = _load(cfg["data"], cfg)
    model = C.CalibrationModel.load(cfg["model"])
    rows = []
    for qs in ds.sets:
        fused = C.fuse_corrected(qs, model)
        rows.append({"source_id": qs.source_id, "n_instances": len(qs), "score": fused.score,
                     "decision": fused.decision.name.lower(),
                     "label": "" if qs.label is None else qs.label.name.lower()})
    if cfg.get("out"):
        with open(cfg["out"], "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["source_id"], lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    else:
        for r in rows:
            print(f"{r['source_id']}\t{r['score']:.6g}\t{r['decision']}")
    return rows


def cmd_evaluate(cfg: dict) -> dict[str, EvalReport]:
    """Evaluate every method row on one or more datasets (one detector per dataset)."""
    data = cfg["data"] if isinstance(cfg["data"], list) else [cfg["data"]]
    models = cfg.get("model") or []
    models = models if isinstance(models, list) else [models]
    if models and len(models) not in (1, len(data)):
        raise InputError("give one model, or one model per dataset")
    names = cfg.get("names") or [Path(p).stem for p in data]
    if len(names) != len(data):
        raise InputError("names must match datasets one to one")
    digest = config_digest(cfg)
    reports = {}
    for i, (path, name) in enumerate(zip(data, names)):
        model = C.CalibrationModel.load(models[i if len(models) > 1 else 0]) if models else None
        ds = _eval_subset(_load(path, cfg), model, cfg)
        reports[name] = P.evaluate_methods(
            ds, model, seed=int(cfg.get("seed", 0)),
            ks=tuple(cfg.get("ks") or P.DEFAULT_KS),
            strategies=tuple(cfg.get("strategies") or P.DEFAULT_STRATEGIES),
            random_reps=int(cfg.get("random_reps", 10)),
            loo=bool(cfg.get("loo", False)),
            fit_config=C.FitConfig(model_order=int(cfg.get("order", 1))),
            config_digest=digest, name=name)
    table = render_table(reports) + f"config_digest: {digest}\n"
    doc = {"config_version": CONFIG_VERSION, "config_digest": digest, "config": cfg,
           "reports": {n: r.to_dict() for n, r in reports.items()}}
    if cfg.get("out_json"):
        _write_text(cfg["out_json"], json.dumps(doc, indent=2, default=str) + "\n")
    if cfg.get("out_table"):
        _write_text(cfg["out_table"], table)
    print(table, end="")
    return reports


def cmd_availability_sweep(cfg: dict) -> list[P.SweepPoint]:
    ds = _load(cfg["data"], cfg)
    model = C.CalibrationModel.load(cfg["model"])
    ds = _eval_subset(ds, model, cfg)
    points = P.availability_sweep(ds, model, tuple(cfg.get("grid") or P.DEFAULT_GRID),
                                  reps=int(cfg.get("reps", 10)), seed=int(cfg.get("seed", 0)))
    digest = config_digest(cfg)
    lines = [f"{'n':>5}  {'method':<10} {'bAcc':>6} {'sd':>5} {'NLL':>6}"]
    lines += [f"{p.n:>5}  {p.method:<10} {100 * p.bacc:6.1f} {100 * p.bacc_sd:5.1f} {p.nll:6.2f}" for p in points]
    text = "\n".join(lines) + f"\nconfig_digest: {digest}\n"
    if cfg.get("out_json"):
        doc = {"config_version": CONFIG_VERSION, "config_digest": digest, "config": cfg,
               "points": [asdict(p) for p in points]}
        _write_text(cfg["out_json"], json.dumps(doc, indent=2, default=str) + "\n")
    print(text, end="")
    return points


def cmd_validate(cfg: dict) -> list[str]:
    ds, report = ingest(cfg["data"], _filters(cfg))
    problems = validate_dataset(ds, cfg.get("depth"))
    print(report.summary())
    print(f"{len(ds)} sources, {ds.n_instances} instances, {len(problems)} violations")
    for p in problems:
        print(f"  {p}")
    return problems


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _strs(text: str) -> list[str]:
    return [t.strip().lower() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadcal", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"quadcal {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--config", help="JSON/YAML file with option defaults for the subcommand")
    sub = parser.add_subparsers(dest="command", required=True)

    def ingest_opts(p):
        p.add_argument("--min-instances", type=int, default=10, help="drop sources with fewer instances")
        p.add_argument("--min-short-side", type=int, default=256, help="drop smaller images; 0 disables")
        p.add_argument("--no-dedup", action="store_true", help="keep rows with repeated checksums")

    p = sub.add_parser("simulate", help="generate a synthetic degradation-tree dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-real", type=int, default=100)
    p.add_argument("--n-fake", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--no-manifests", action="store_true")

    p = sub.add_parser("fit", help="fit the calibration model on a development split")
    p.add_argument("data")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--split", type=float, default=0.5, help="dev fraction of sources; 1 uses all")
    p.add_argument("--order", type=int, choices=[1, 2], default=1)
    p.add_argument("--seed", type=int, default=0)
    ingest_opts(p)

    p = sub.add_parser("score", help="fused calibrated score per source")
    p.add_argument("data")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    ingest_opts(p)

    p = sub.add_parser("evaluate", help="bAcc/NLL report for all methods")
    p.add_argument("data", nargs="+")
    p.add_argument("--model", nargs="+", help="one model, or one per dataset")
    p.add_argument("--names", type=lambda s: [t.strip() for t in s.split(",")])
    p.add_argument("--loo", action="store_true", help="add leave-one-out QuAD* rows")
    p.add_argument("--order", type=int, choices=[1, 2], default=1, help="model order for --loo fits")
    p.add_argument("--ks", type=_ints, default=list(P.DEFAULT_KS))
    p.add_argument("--strategies", type=_strs, default=list(P.DEFAULT_STRATEGIES))
    p.add_argument("--random-reps", type=int, default=10)
    p.add_argument("--all-sources", action="store_true", help="do not exclude the model's dev sources")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-json")
    p.add_argument("--out-table")
    ingest_opts(p)

    p = sub.add_parser("sweep", help="metrics versus number of available instances")
    p.add_argument("data")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=_ints, default=list(P.DEFAULT_GRID))
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--all-sources", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-json")
    ingest_opts(p)

    p = sub.add_parser("validate", help="check a dataset file against the data-model invariants")
    p.add_argument("data")
    p.add_argument("--depth", type=int)
    ingest_opts(p)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "sweep": cmd_availability_sweep,
    "validate": cmd_validate,
}


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict[str, Any]:
    """Merge defaults < config file < explicit flags into one versioned document."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "command")}
    if args.config:
        try:
            text = Path(args.config).read_text()
            loaded = yaml.safe_load(text) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InputError(f"{args.config}: config must be a mapping")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        for key, value in loaded.items():
            if key not in cfg or cfg[key] == subparser.get_default(key):
                cfg[key] = value
    cfg["command"] = args.command
    cfg["config_version"] = CONFIG_VERSION
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args, parser)
        result = COMMANDS[args.command](cfg)
    except QuadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    if args.command == "validate" and result:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
