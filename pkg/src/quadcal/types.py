"""Score-level data model shared by every other module.

Records are frozen dataclasses. Quality is stored raw; normalization lives in
:class:`quadcal.calibration.CalibrationModel`.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Optional

import numpy as np

from .errors import InputError

SCHEMA_VERSION = "1"


class Label(enum.IntEnum):
    REAL = 0
    FAKE = 1

    @classmethod
    def parse(cls, value: Any) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, str):
            token = value.strip().lower()
            if token in ("real", "0"):
                return cls.REAL
            if token in ("fake", "1"):
                return cls.FAKE
            raise InputError(f"unrecognized label {value!r}")
        if isinstance(value, (bool, np.bool_)):
            raise InputError(f"unrecognized label {value!r}")
        if value in (0, 1):
            return cls(int(value))
        raise InputError(f"unrecognized label {value!r}")


class ImageFormat(str, enum.Enum):
    JPEG = "JPEG"
    WEBP = "WEBP"
    PNG = "PNG"
    OTHER = "OTHER"

    @property
    def lossy(self) -> bool:
        return self in (ImageFormat.JPEG, ImageFormat.WEBP)


@dataclass(frozen=True)
class InstanceMeta:
    width: Optional[int] = None
    height: Optional[int] = None
    jpeg_qf: Optional[int] = None
    format: Optional[ImageFormat] = None
    timestamp: Optional[float] = None
    tree_level: Optional[int] = None

    @property
    def pixels(self) -> Optional[int]:
        if self.width is None or self.height is None:
            return None
        return self.width * self.height

    @property
    def short_side(self) -> Optional[int]:
        if self.width is None or self.height is None:
            return None
        return min(self.width, self.height)


@dataclass(frozen=True)
class InstanceRecord:
    source_id: str
    instance_id: str
    logit: float
    quality: float
    label: Optional[Label] = None
    meta: InstanceMeta = field(default_factory=InstanceMeta)


@dataclass(frozen=True)
class QuerySet:
    """All near-duplicate instances of one source image."""

    source_id: str
    instances: tuple[InstanceRecord, ...]
    label: Optional[Label] = None

    def __post_init__(self):
        if not isinstance(self.instances, tuple):
            object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self) -> int:
        return len(self.instances)

    @cached_property
    def logits(self) -> np.ndarray:
        return np.array([r.logit for r in self.instances], dtype=float)

    @cached_property
    def qualities(self) -> np.ndarray:
        return np.array([r.quality for r in self.instances], dtype=float)

    def with_instances(self, instances: Iterable[InstanceRecord]) -> "QuerySet":
        return QuerySet(self.source_id, tuple(instances), self.label)


@dataclass(frozen=True)
class Dataset:
    sets: tuple[QuerySet, ...]
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        if not isinstance(self.sets, tuple):
            object.__setattr__(self, "sets", tuple(self.sets))

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    @property
    def n_instances(self) -> int:
        return sum(len(s) for s in self.sets)

    @property
    def source_ids(self) -> list[str]:
        return [s.source_id for s in self.sets]

    @property
    def is_labeled(self) -> bool:
        return all(s.label is not None for s in self.sets)

    def records(self) -> Iterable[InstanceRecord]:
        for s in self.sets:
            yield from s.instances

    def subset(self, source_ids: Iterable[str]) -> "Dataset":
        keep = set(source_ids)
        return Dataset(tuple(s for s in self.sets if s.source_id in keep), self.schema_version)

    def exclude(self, source_ids: Iterable[str]) -> "Dataset":
        drop = set(source_ids)
        return Dataset(tuple(s for s in self.sets if s.source_id not in drop), self.schema_version)

    @classmethod
    def from_records(cls, records: Iterable[InstanceRecord]) -> "Dataset":
        """Group records by ``source_id``, preserving first-seen order.

        The set label is taken from the first labeled record; disagreeing
        labels are left in place for :func:`validate_dataset` to report.
        """
        groups: dict[str, list[InstanceRecord]] = {}
        for rec in records:
            groups.setdefault(rec.source_id, []).append(rec)
        sets = []
        for sid, recs in groups.items():
            label = next((r.label for r in recs if r.label is not None), None)
            sets.append(QuerySet(sid, tuple(recs), label))
        return cls(tuple(sets))


def _finite(x) -> bool:
    try:
        return math.isfinite(x)
    except TypeError:
        return False


def validate_dataset(ds: Dataset, depth: Optional[int] = None) -> list[str]:
    """Return a description of every invariant violation in ``ds``.

    An empty list means the dataset is valid. ``depth`` bounds ``tree_level``
    when given; otherwise only ``tree_level >= 1`` is checked.
    """
    problems: list[str] = []
    sid_counts = Counter(s.source_id for s in ds.sets)
    for sid, n in sorted(sid_counts.items()):
        if n > 1:
            problems.append(f"source_id {sid!r} appears in {n} query sets")

    seen: Counter = Counter()
    for qs in ds.sets:
        if len(qs.instances) == 0:
            problems.append(f"query set {qs.source_id!r} is empty")
        for rec in qs.instances:
            key = (rec.source_id, rec.instance_id)
            seen[key] += 1
            where = f"({rec.source_id}, {rec.instance_id})"
            if rec.source_id != qs.source_id:
                problems.append(f"{where}: filed under query set {qs.source_id!r}")
            if not _finite(rec.logit):
                problems.append(f"{where}: logit is not finite ({rec.logit!r})")
            if not _finite(rec.quality):
                problems.append(f"{where}: quality is not finite ({rec.quality!r})")
            if qs.label is not None and rec.label is not None and rec.label != qs.label:
                problems.append(f"{where}: label {rec.label.name} disagrees with set label {qs.label.name}")
            m = rec.meta
            if m.jpeg_qf is not None:
                if not 1 <= m.jpeg_qf <= 100:
                    problems.append(f"{where}: jpeg_qf {m.jpeg_qf} outside [1, 100]")
                if m.format is not None and not m.format.lossy:
                    problems.append(f"{where}: jpeg_qf given for lossless format {m.format.value}")
            if m.tree_level is not None:
                if m.tree_level < 1:
                    problems.append(f"{where}: tree_level {m.tree_level} < 1")
                elif depth is not None and m.tree_level > depth:
                    problems.append(f"{where}: tree_level {m.tree_level} exceeds depth {depth}")
            for name in ("width", "height"):
                v = getattr(m, name)
                if v is not None and v <= 0:
                    problems.append(f"{where}: {name} {v} is not positive")
    for key, n in sorted(seen.items()):
        if n > 1:
            problems.append(f"duplicate key ({key[0]}, {key[1]}) appears {n} times")
    return problems


@dataclass(frozen=True)
class FusedScore:
    """One fused decision for a query set; ``decision`` is FAKE iff ``score > 0``."""

    score: float
    decision: Label
    per_instance: tuple[float, ...] = ()

    @classmethod
    def from_score(cls, score: float, per_instance: Iterable[float] = ()) -> "FusedScore":
        return cls(float(score), Label.FAKE if score > 0 else Label.REAL, tuple(per_instance))
