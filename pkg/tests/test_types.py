import json
import math

from hypothesis import given, settings
from hypothesis import strategies as st

from quadcal.io import dataset_to_dict, ingest, write_csv, write_json, IngestFilters
from quadcal.types import (
    Dataset, ImageFormat, InstanceMeta, InstanceRecord, Label, QuerySet, validate_dataset,
)

from conftest import make_set


def test_valid_single_record():
    ds = Dataset((make_set("a", [1.0]),))
    assert validate_dataset(ds) == []


def test_nan_quality_names_the_record():
    rec = InstanceRecord("a", "x1", 0.3, float("nan"), Label.FAKE)
    problems = validate_dataset(Dataset((QuerySet("a", (rec,), Label.FAKE),)))
    assert len(problems) == 1
    assert "(a, x1)" in problems[0] and "quality" in problems[0]


def test_duplicate_key_reported():
    rec = InstanceRecord("a", "x1", 0.3, 0.2, Label.FAKE)
    problems = validate_dataset(Dataset((QuerySet("a", (rec, rec), Label.FAKE),)))
    assert any("duplicate key" in p for p in problems)


def test_other_invariants():
    recs = (
        InstanceRecord("a", "1", 0.0, 0.0, Label.REAL, InstanceMeta(jpeg_qf=90, format=ImageFormat.PNG)),
        InstanceRecord("a", "2", 0.0, 0.0, Label.REAL, InstanceMeta(tree_level=6)),
        InstanceRecord("a", "3", math.inf, 0.0, Label.FAKE),
    )
    problems = validate_dataset(Dataset((QuerySet("a", recs, Label.REAL), QuerySet("a", recs[:1]))), depth=5)
    text = "\n".join(problems)
    assert "lossless" in text
    assert "exceeds depth" in text
    assert "logit is not finite" in text
    assert "disagrees" in text
    assert "appears in 2 query sets" in text


def test_label_parse():
    assert Label.parse("fake") is Label.FAKE
    assert Label.parse("0") is Label.REAL
    assert Label.parse(1) is Label.FAKE


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
opt_int = st.none() | st.integers(1, 10_000)
metas = st.builds(
    InstanceMeta,
    width=opt_int, height=opt_int,
    jpeg_qf=st.none() | st.integers(1, 100),
    format=st.just(ImageFormat.JPEG),
    timestamp=st.none() | st.floats(0, 2e9, allow_nan=False),
    tree_level=st.none() | st.integers(1, 5),
)


@st.composite
def datasets(draw):
    n_sets = draw(st.integers(1, 4))
    sets = []
    for s in range(n_sets):
        label = draw(st.sampled_from([Label.REAL, Label.FAKE]))
        n = draw(st.integers(1, 5))
        recs = tuple(
            InstanceRecord(f"src{s}", f"inst{i}", draw(finite), draw(finite), label, draw(metas))
            for i in range(n)
        )
        sets.append(QuerySet(f"src{s}", recs, label))
    return Dataset(tuple(sets))


NO_FILTERS = IngestFilters(min_short_side=None, dedup_checksum=False, min_instances=1)


@settings(max_examples=40, deadline=None)
@given(ds=datasets())
def test_round_trip_csv_and_json(tmp_path_factory, ds):
    d = tmp_path_factory.mktemp("rt")
    write_csv(ds, d / "x.csv")
    write_json(ds, d / "x.json")
    for path in (d / "x.csv", d / "x.json"):
        back, _ = ingest(path, NO_FILTERS)
        assert back == ds


@settings(max_examples=20, deadline=None)
@given(ds=datasets())
def test_validate_is_pure(ds):
    before = json.dumps(dataset_to_dict(ds))
    assert validate_dataset(ds) == validate_dataset(ds) == []
    assert json.dumps(dataset_to_dict(ds)) == before
