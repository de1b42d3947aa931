"""Dataset files: CSV and JSON readers/writers plus the ingestion filters.

CSV header::

    source_id,instance_id,logit,quality,label,width,height,jpeg_qf,format,timestamp,tree_level

Empty cells mean "absent". An optional trailing ``checksum`` column enables
duplicate-file removal. Labels are written as 0 (real) / 1 (fake); ``real`` and
``fake`` are also accepted on input.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InputError
from .types import SCHEMA_VERSION, Dataset, ImageFormat, InstanceMeta, InstanceRecord, Label

log = logging.getLogger(__name__)

CSV_COLUMNS = ["source_id", "instance_id", "logit", "quality", "label", "width", "height",
               "jpeg_qf", "format", "timestamp", "tree_level"]
DATASET_SCHEMA = "quadcal.dataset"
MAX_REPORTED_ERRORS = 20


@dataclass(frozen=True)
class IngestFilters:
    min_short_side: Optional[int] = 256
    dedup_checksum: bool = True
    min_instances: int = 10


@dataclass
class IngestReport:
    rows_read: int = 0
    dropped_small: int = 0
    dropped_duplicate: int = 0
    dropped_sources: list[str] = field(default_factory=list)
    dropped_source_rows: int = 0

    @property
    def rows_kept(self) -> int:
        return self.rows_read - self.dropped_small - self.dropped_duplicate - self.dropped_source_rows

    def summary(self) -> str:
        return (f"read {self.rows_read} rows; dropped {self.dropped_small} small, "
                f"{self.dropped_duplicate} duplicate-checksum, {self.dropped_source_rows} rows from "
                f"{len(self.dropped_sources)} sources under the minimum; kept {self.rows_kept}")


def _opt(cell, conv):
    if cell is None:
        return None
    if isinstance(cell, str):
        cell = cell.strip()
        if cell == "":
            return None
    return conv(cell)


def _int(v):
    if isinstance(v, float):
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {v!r}")
        return int(v)
    return int(v)


def _finite_float(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {v!r}")
    return x


def _fmt(v):
    return ImageFormat(str(v).strip().upper())


def _record_from_fields(row: dict) -> tuple[InstanceRecord, Optional[str]]:
    for key in ("source_id", "instance_id", "logit", "quality"):
        if row.get(key) in (None, ""):
            raise ValueError(f"missing {key}")
    meta = InstanceMeta(
        width=_opt(row.get("width"), _int),
        height=_opt(row.get("height"), _int),
        jpeg_qf=_opt(row.get("jpeg_qf"), _int),
        format=_opt(row.get("format"), _fmt),
        timestamp=_opt(row.get("timestamp"), _finite_float),
        tree_level=_opt(row.get("tree_level"), _int),
    )
    rec = InstanceRecord(
        source_id=str(row["source_id"]),
        instance_id=str(row["instance_id"]),
        logit=_finite_float(row["logit"]),
        quality=_finite_float(row["quality"]),
        label=_opt(row.get("label"), Label.parse),
        meta=meta,
    )
    return rec, _opt(row.get("checksum"), str)


def _read_csv_rows(path: Path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("source_id", "instance_id", "logit", "quality") if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"{path}: header lacks required columns {missing}")
        for row in reader:
            if None in row:
                yield reader.line_num, None, "too many cells"
            else:
                yield reader.line_num, row, None


def _read_json_rows(path: Path):
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("schema") != DATASET_SCHEMA:
        raise InputError(f"{path}: not a {DATASET_SCHEMA} document")
    n = 0
    for s in doc.get("sets", []):
        for inst in s.get("instances", []):
            n += 1
            row = dict(inst)
            row["source_id"] = s.get("source_id")
            if row.get("label") is None:
                row["label"] = s.get("label")
            yield n, row, None


def read_records(path) -> list[tuple[int, InstanceRecord, Optional[str]]]:
    """Parse every row, raising one :class:`InputError` that lists all malformed lines."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    rows = _read_json_rows(path) if path.suffix.lower() == ".json" else _read_csv_rows(path)
    out, errors = [], []
    for line, row, err in rows:
        if err is None:
            try:
                rec, checksum = _record_from_fields(row)
                out.append((line, rec, checksum))
                continue
            except (ValueError, TypeError, InputError) as exc:
                err = str(exc)
        errors.append(f"line {line}: {err}")
    if errors:
        shown = errors[:MAX_REPORTED_ERRORS]
        more = len(errors) - len(shown)
        raise InputError(f"{path}: {len(errors)} malformed rows\n  " + "\n  ".join(shown)
                         + (f"\n  ... and {more} more" if more else ""))
    return out


def ingest(path, filters: IngestFilters = IngestFilters()) -> tuple[Dataset, IngestReport]:
    """Read a dataset file and apply the size, duplicate and minimum-count filters."""
    rows = read_records(path)
    report = IngestReport(rows_read=len(rows))

    seen_keys: dict[tuple[str, str], int] = {}
    dup_keys = []
    for line, rec, _ in rows:
        key = (rec.source_id, rec.instance_id)
        if key in seen_keys:
            dup_keys.append(f"line {line}: ({key[0]}, {key[1]}) repeats line {seen_keys[key]}")
        else:
            seen_keys[key] = line
    if dup_keys:
        raise InputError(f"{path}: duplicate instance keys\n  " + "\n  ".join(dup_keys[:MAX_REPORTED_ERRORS]))

    kept = []
    checksums: set[str] = set()
    for _, rec, checksum in rows:
        short = rec.meta.short_side
        if filters.min_short_side is not None and short is not None and short < filters.min_short_side:
            report.dropped_small += 1
            continue
        if filters.dedup_checksum and checksum is not None:
            if checksum in checksums:
                report.dropped_duplicate += 1
                continue
            checksums.add(checksum)
        kept.append(rec)

    ds = Dataset.from_records(kept)
    for qs in ds.sets:
        labels = {r.label for r in qs.instances if r.label is not None}
        if len(labels) > 1:
            raise InputError(f"{path}: source {qs.source_id!r} mixes labels")
    if filters.min_instances > 1:
        small = [qs for qs in ds.sets if len(qs) < filters.min_instances]
        for qs in small:
            log.info("dropping source %s: %d instances < %d", qs.source_id, len(qs), filters.min_instances)
            report.dropped_sources.append(qs.source_id)
            report.dropped_source_rows += len(qs)
        ds = ds.exclude(report.dropped_sources)
    log.info("%s: %s", path, report.summary())
    return ds, report


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, ImageFormat):
        return v.value
    if isinstance(v, Label):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in ds.records():
            m = rec.meta
            w.writerow([_cell(v) for v in (
                rec.source_id, rec.instance_id, float(rec.logit), float(rec.quality), rec.label,
                m.width, m.height, m.jpeg_qf, m.format, m.timestamp, m.tree_level)])


def dataset_to_dict(ds: Dataset) -> dict:
    sets = []
    for qs in ds.sets:
        insts = []
        for rec in qs.instances:
            d = {"instance_id": rec.instance_id, "logit": rec.logit, "quality": rec.quality}
            if rec.label is not None and rec.label != qs.label:
                d["label"] = int(rec.label)
            for k, v in vars(rec.meta).items():
                if v is not None:
                    d[k] = v.value if isinstance(v, ImageFormat) else v
            insts.append(d)
        sets.append({"source_id": qs.source_id,
                     "label": None if qs.label is None else int(qs.label),
                     "instances": insts})
    return {"schema": DATASET_SCHEMA, "schema_version": ds.schema_version or SCHEMA_VERSION, "sets": sets}


def write_json(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset_to_dict(ds)) + "\n")


def write_dataset(ds: Dataset, path) -> None:
    if Path(path).suffix.lower() == ".json":
        write_json(ds, path)
    else:
        write_csv(ds, path)
