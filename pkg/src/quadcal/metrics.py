"""Balanced accuracy, NLL and the per-method evaluation report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import InputError
from .types import Dataset, FusedScore, Label, QuerySet

PROB_EPS = 1e-7

ScoringMethod = Callable[[QuerySet], Union[FusedScore, float]]


def balanced_accuracy(decisions: Iterable[tuple[Label, Label]]) -> float:
    """Mean of true-positive and true-negative rates over ``(predicted, truth)`` pairs."""
    counts = {Label.REAL: [0, 0], Label.FAKE: [0, 0]}  # [correct, total]
    for pred, truth in decisions:
        c = counts[Label(truth)]
        c[1] += 1
        c[0] += int(Label(pred) == Label(truth))
    if counts[Label.REAL][1] == 0 or counts[Label.FAKE][1] == 0:
        raise InputError("balanced accuracy needs at least one example of each class")
    tpr = counts[Label.FAKE][0] / counts[Label.FAKE][1]
    tnr = counts[Label.REAL][0] / counts[Label.REAL][1]
    return (tpr + tnr) / 2


def nll(scores: Iterable[tuple[float, Label]], eps: float = PROB_EPS) -> float:
    """Mean negative log-probability of the true label under ``sigmoid(score)``.

    Probabilities are clamped to ``[eps, 1 - eps]``, so a saturated but wrong
    score costs at most ``-log(eps)``.
    """
    pairs = list(scores)
    if not pairs:
        raise InputError("nll needs at least one score")
    s = np.array([p[0] for p in pairs], dtype=float)
    if not np.all(np.isfinite(s)):
        raise InputError("nll got a non-finite score")
    fake = np.array([Label(p[1]) == Label.FAKE for p in pairs])
    p_fake = expit(s)
    p_true = np.clip(np.where(fake, p_fake, 1.0 - p_fake), eps, 1.0 - eps)
    return float(-np.mean(np.log(p_true)))


def _as_score(out) -> float:
    return out.score if isinstance(out, FusedScore) else float(out)


def score_dataset(ds: Dataset, method: ScoringMethod) -> list[tuple[float, Label]]:
    """One ``(score, truth)`` pair per query set."""
    out = []
    for qs in ds.sets:
        if qs.label is None:
            raise InputError(f"evaluation needs labels; query set {qs.source_id!r} has none")
        out.append((_as_score(method(qs)), qs.label))
    return out


def metrics_from_scores(pairs: Sequence[tuple[float, Label]], threshold: float = 0.0) -> tuple[float, float]:
    decisions = [(Label.FAKE if s > threshold else Label.REAL, y) for s, y in pairs]
    return balanced_accuracy(decisions), nll(pairs)


def evaluate(ds: Dataset, method: ScoringMethod, threshold: float = 0.0) -> tuple[float, float]:
    """Balanced accuracy and NLL of ``method`` with one decision per source image."""
    return metrics_from_scores(score_dataset(ds, method), threshold)


@dataclass
class EvalRow:
    method: str
    k: str
    bacc: Optional[float]
    nll: Optional[float]
    n_sources: int
    note: str = ""

    @property
    def available(self) -> bool:
        return self.bacc is not None


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    config_digest: str = ""
    name: str = ""
    prob_eps: float = PROB_EPS

    def row(self, method: str, k: str) -> EvalRow:
        for r in self.rows:
            if r.method == method and r.k == k:
                return r
        raise KeyError((method, k))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config_digest": self.config_digest,
            "prob_eps": self.prob_eps,
            "rows": [asdict(r) for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            rows=[EvalRow(**r) for r in d["rows"]],
            config_digest=d.get("config_digest", ""),
            name=d.get("name", ""),
            prob_eps=d.get("prob_eps", PROB_EPS),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _cell(r: Optional[EvalRow]) -> str:
    if r is None or not r.available:
        return "n/a"
    return f"{100 * r.bacc:.1f} / {r.nll:.2f}"


def render_table(reports: Union[EvalReport, Mapping[str, EvalReport]]) -> str:
    """Aligned text table: methods as rows, one ``bAcc / NLL`` column per report.

    With more than one report an AVG column is appended, averaging over the
    reports where the row is available.
    """
    if isinstance(reports, EvalReport):
        reports = {reports.name or "result": reports}
    names = list(reports)
    keys: list[tuple[str, str]] = []
    for rep in reports.values():
        for r in rep.rows:
            if (r.method, r.k) not in keys:
                keys.append((r.method, r.k))

    header = ["method", "k"] + names + (["AVG"] if len(names) > 1 else [])
    lines = [header]
    for method, k in keys:
        cells = []
        avail = []
        for n in names:
            try:
                r = reports[n].row(method, k)
            except KeyError:
                r = None
            cells.append(_cell(r))
            if r is not None and r.available:
                avail.append(r)
        if len(names) > 1:
            if avail:
                b = math.fsum(r.bacc for r in avail) / len(avail)
                v = math.fsum(r.nll for r in avail) / len(avail)
                cells.append(f"{100 * b:.1f} / {v:.2f}")
            else:
                cells.append("n/a")
        lines.append([method, k] + cells)

    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    out = []
    for i, row in enumerate(lines):
        out.append("  ".join(c.ljust(w) if j < 2 else c.rjust(w) for j, (c, w) in enumerate(zip(row, widths))))
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    notes = [
        f"{n}: {r.method} {r.k}: {r.note}"
        for n, rep in reports.items() for r in rep.rows if r.note
    ]
    text = "\n".join(out) + "\n"
    text += f"bAcc in %, NLL in nats; probabilities clamped to [{PROB_EPS:g}, 1-{PROB_EPS:g}]\n"
    if notes:
        text += "\n".join(notes) + "\n"
    return text
