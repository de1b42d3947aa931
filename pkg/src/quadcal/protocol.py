"""Evaluation protocols: source-level splits, the method grid, leave-one-out and availability sweeps."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import baselines as B
from . import calibration as C
from .errors import InputError
from .metrics import EvalReport, EvalRow, metrics_from_scores, score_dataset
from .sim import rng_stream, subsample_availability
from .types import Dataset, FusedScore, Label, QuerySet

log = logging.getLogger(__name__)

DEFAULT_KS = (1, 10, 20)
DEFAULT_STRATEGIES = ("qf", "size", "date", "iqa")
DEFAULT_GRID = (1, 2, 4, 8, 16, 32, 64, 124)
METHOD_NAMES = {"qf": "QF", "size": "Size", "date": "Date", "iqa": "IQA", "random": "random"}


def derive_seed(*parts) -> int:
    h = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def split_sources(ds: Dataset, dev_fraction: float = 0.5, seed: int = 0) -> tuple[list[str], list[str]]:
    """Seeded, label-stratified partition of source ids into (dev, eval).

    Whole sources go to one side, so no near-duplicates straddle the split.
    """
    if not 0.0 < dev_fraction < 1.0:
        raise InputError(f"dev fraction must be in (0, 1), got {dev_fraction}")
    if not ds.is_labeled:
        raise InputError("splitting needs a labeled dataset")
    rng = rng_stream(seed, "", "split")
    dev, ev = [], []
    for label in (Label.REAL, Label.FAKE):
        ids = sorted(s.source_id for s in ds.sets if s.label == label)
        if not ids:
            continue
        perm = [ids[i] for i in rng.permutation(len(ids))]
        n_dev = int(math.floor(dev_fraction * len(ids) + 0.5))
        if len(ids) >= 2:
            n_dev = min(max(n_dev, 1), len(ids) - 1)
        dev += perm[:n_dev]
        ev += perm[n_dev:]
    return sorted(dev), sorted(ev)


def _row(name: str, k: str, ds: Dataset, method: Callable[[QuerySet], FusedScore]) -> EvalRow:
    try:
        bacc, nll = metrics_from_scores(score_dataset(ds, method))
    except InputError as exc:
        return EvalRow(name, k, None, None, len(ds), note=f"unavailable: {exc}")
    return EvalRow(name, k, bacc, nll, len(ds))


def random_row(ds: Dataset, seed: int, reps: int = 10) -> EvalRow:
    """Single random instance per source, metrics averaged over ``reps`` seeded repetitions."""
    strat = B.RankingStrategy("random", 1)
    baccs, nlls = [], []
    for rep in range(reps):
        pairs = score_dataset(ds, lambda qs: B.aggregate_topk(qs, strat, derive_seed(seed, qs.source_id, rep)))
        b, n = metrics_from_scores(pairs)
        baccs.append(b)
        nlls.append(n)
    return EvalRow("random", "1", math.fsum(baccs) / reps, math.fsum(nlls) / reps, len(ds),
                   note=f"mean over {reps} seeded repetitions")


def loo_scores(ds: Dataset, config: C.FitConfig = C.FitConfig()) -> dict[str, FusedScore]:
    """Score each source with a model fitted on all the other sources.

    Every holdout is attempted; if any of the fits fails, one :class:`InputError`
    naming the failing holdouts is raised afterwards.
    """
    out, failed = {}, []
    for qs in ds.sets:
        try:
            model = C.loo_fit(ds, qs.source_id, config)
        except InputError as exc:
            failed.append(f"{qs.source_id} ({exc})")
            continue
        out[qs.source_id] = C.fuse_corrected(qs, model)
    if failed:
        raise InputError(f"leave-one-out fit failed for {len(failed)} holdouts: " + "; ".join(failed[:5]))
    return out


def evaluate_methods(
    ds: Dataset,
    model: Optional[C.CalibrationModel] = None,
    *,
    seed: int = 0,
    ks: Sequence[int] = DEFAULT_KS,
    strategies: Sequence[str] = DEFAULT_STRATEGIES,
    random_reps: int = 10,
    loo: bool = False,
    fit_config: C.FitConfig = C.FitConfig(),
    config_digest: str = "",
    name: str = "",
) -> EvalReport:
    """Run the full comparison grid on a labeled dataset."""
    if len(ds) == 0:
        raise InputError("nothing to evaluate: dataset is empty")
    if not ds.is_labeled:
        raise InputError("evaluation needs labels on every source")
    rows = [random_row(ds, seed, random_reps), _row("naive", "all", ds, B.naive_mean)]
    if any(r.meta.tree_level is not None for r in ds.records()):
        rows.append(_row("oracle", "L1", ds, lambda qs: B.oracle_level(qs, 1)))
    for kind in strategies:
        for k in ks:
            strat = B.RankingStrategy(kind, k)
            rows.append(_row(METHOD_NAMES[strat.kind.value], strat.k_label, ds,
                             lambda qs, s=strat: B.aggregate_topk(qs, s, seed)))
    if model is not None:
        rows.append(_row("QuAD", "all", ds, lambda qs: C.fuse_corrected(qs, model)))
    if loo:
        try:
            scores = loo_scores(ds, fit_config)
        except InputError as exc:
            rows.append(EvalRow("QuAD*", "all", None, None, len(ds), note=f"unavailable: {exc}"))
        else:
            rows.append(_row("QuAD*", "all", ds, lambda qs: scores[qs.source_id]))
    return EvalReport(rows=rows, config_digest=config_digest, name=name)


@dataclass
class SweepPoint:
    n: int
    method: str
    bacc: float
    nll: float
    bacc_sd: float
    reps: int


def availability_sweep(
    ds: Dataset,
    model: C.CalibrationModel,
    grid: Sequence[int] = DEFAULT_GRID,
    reps: int = 10,
    seed: int = 0,
    top_k: int = 10,
) -> list[SweepPoint]:
    """Metrics when only ``n`` randomly chosen instances of each source are available.

    Sources with fewer than ``n`` instances contribute all of them.
    """
    iqa = B.RankingStrategy("iqa", top_k)
    methods = {
        "naive": B.naive_mean,
        f"IQA-top{top_k}": lambda qs: B.aggregate_topk(qs, iqa, seed),
        "QuAD": lambda qs: C.fuse_corrected(qs, model),
    }
    points = []
    for n in grid:
        per_method: dict[str, list[tuple[float, float]]] = {m: [] for m in methods}
        for rep in range(reps):
            sub = Dataset(tuple(
                qs.with_instances(subsample_availability(
                    qs.instances, min(n, len(qs)), rng_stream(seed, qs.source_id, "avail", n, rep)))
                for qs in ds.sets))
            for name, fn in methods.items():
                per_method[name].append(metrics_from_scores(score_dataset(sub, fn)))
        for name, vals in per_method.items():
            b = np.array([v[0] for v in vals])
            l = np.array([v[1] for v in vals])
            points.append(SweepPoint(n, name, float(b.mean()), float(l.mean()), float(b.std()), reps))
    return points
