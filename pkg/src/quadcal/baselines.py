"""Comparison strategies: random single instance, naive mean, oracle level, ranked top-K means."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InputError
from .types import FusedScore, InstanceRecord, QuerySet

ALL = "all"


class RankKind(str, enum.Enum):
    RANDOM = "random"
    QF = "qf"
    SIZE = "size"
    DATE = "date"
    IQA = "iqa"


@dataclass(frozen=True)
class RankingStrategy:
    kind: RankKind
    k: Union[int, str] = ALL

    def __post_init__(self):
        object.__setattr__(self, "kind", RankKind(self.kind))
        if self.k != ALL and (not isinstance(self.k, int) or isinstance(self.k, bool) or self.k < 1):
            raise InputError(f"k must be a positive integer or {ALL!r}, got {self.k!r}")

    @property
    def k_label(self) -> str:
        return ALL if self.k == ALL else str(self.k)


def _qf_key(rec: InstanceRecord) -> Optional[tuple]:
    m = rec.meta
    if m.format is not None and not m.format.lossy and m.jpeg_qf is None:
        return (0, 0)  # lossless beats every lossy QF
    if m.jpeg_qf is not None:
        return (1, -m.jpeg_qf)
    return None


def _size_key(rec):
    px = rec.meta.pixels
    return None if px is None else (-px,)


def _date_key(rec):
    ts = rec.meta.timestamp
    return None if ts is None else (ts,)


def _iqa_key(rec):
    return (-rec.quality,)


_KEYS = {RankKind.QF: _qf_key, RankKind.SIZE: _size_key, RankKind.DATE: _date_key, RankKind.IQA: _iqa_key}


def rank_instances(qs: QuerySet, strategy: RankingStrategy, seed: int = 0) -> list[str]:
    """Order instance ids best-first under ``strategy``.

    Ties are broken by ascending ``instance_id``. Instances missing the ranked
    attribute go last; if no instance carries it, :class:`InputError` is raised.
    RANDOM is a seeded shuffle of the id-sorted instances, so it does not depend
    on storage order either.
    """
    if len(qs.instances) == 0:
        raise InputError(f"query set {qs.source_id!r} is empty")
    by_id = sorted(qs.instances, key=lambda r: r.instance_id)
    if strategy.kind == RankKind.RANDOM:
        perm = np.random.default_rng(seed).permutation(len(by_id))
        return [by_id[i].instance_id for i in perm]

    key = _KEYS[strategy.kind]
    keyed = [(key(r), r.instance_id) for r in by_id]
    if all(k is None for k, _ in keyed):
        raise InputError(f"no instance of {qs.source_id!r} has metadata for {strategy.kind.value} ranking")
    have = [(k, iid) for k, iid in keyed if k is not None]
    missing = [iid for k, iid in keyed if k is None]
    have.sort()
    return [iid for _, iid in have] + missing


def mean_score(logits) -> FusedScore:
    vals = [float(x) for x in logits]
    return FusedScore.from_score(math.fsum(vals) / len(vals))


def aggregate_topk(qs: QuerySet, strategy: RankingStrategy, seed: int = 0) -> FusedScore:
    """Mean raw logit of the first ``min(k, N)`` ranked instances."""
    order = rank_instances(qs, strategy, seed)
    n = len(order) if strategy.k == ALL else min(strategy.k, len(order))
    logit_of = {r.instance_id: r.logit for r in qs.instances}
    return mean_score(logit_of[iid] for iid in order[:n])


def naive_mean(qs: QuerySet) -> FusedScore:
    if len(qs.instances) == 0:
        raise InputError(f"query set {qs.source_id!r} is empty")
    return mean_score(qs.logits)


def oracle_level(qs: QuerySet, level: int = 1) -> FusedScore:
    """Mean raw logit over the instances sitting at ``level`` of the degradation tree."""
    vals = [r.logit for r in qs.instances if r.meta.tree_level == level]
    if not vals:
        raise InputError(f"no instance of {qs.source_id!r} at tree level {level}")
    return mean_score(vals)
