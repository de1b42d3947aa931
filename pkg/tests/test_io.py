import pytest

from quadcal.errors import InputError
from quadcal.io import CSV_COLUMNS, IngestFilters, ingest

HEADER = ",".join(CSV_COLUMNS)


def _row(sid, iid, label="1", w="", h="", qf="", fmt="", extra=()):
    cells = [sid, iid, "0.5", "0.25", label, w, h, qf, fmt, "", "", *extra]
    return ",".join(cells)


def _write(tmp_path, lines, header=HEADER):
    p = tmp_path / "d.csv"
    p.write_text("\n".join([header, *lines]) + "\n")
    return p


def test_small_image_dropped_and_counted(tmp_path):
    lines = [_row("a", "0", w="200", h="300")] + [_row("a", str(i), w="1000", h="800") for i in range(1, 11)]
    ds, report = ingest(_write(tmp_path, lines))
    assert report.dropped_small == 1
    assert ds.n_instances == 10
    assert "dropped 1 small" in report.summary()
    ds, report = ingest(_write(tmp_path, lines), IngestFilters(min_short_side=None))
    assert report.dropped_small == 0 and ds.n_instances == 11


def test_dimensions_absent_skip_size_filter(tmp_path):
    ds, report = ingest(_write(tmp_path, [_row("a", str(i)) for i in range(10)]))
    assert report.dropped_small == 0 and ds.n_instances == 10


def test_min_instances_drops_whole_source(tmp_path, caplog):
    lines = [_row("small", str(i)) for i in range(9)] + [_row("big", str(i)) for i in range(10)]
    with caplog.at_level("INFO"):
        ds, report = ingest(_write(tmp_path, lines))
    assert list(ds.source_ids) == ["big"]
    assert report.dropped_sources == ["small"] and report.dropped_source_rows == 9
    assert "small" in caplog.text
    ds, _ = ingest(_write(tmp_path, lines), IngestFilters(min_instances=1))
    assert len(ds) == 2


def test_checksum_dedup(tmp_path):
    header = HEADER + ",checksum"
    lines = [_row("a", str(i), extra=("abc" if i < 3 else f"c{i}",)) for i in range(12)]
    ds, report = ingest(_write(tmp_path, lines, header))
    assert report.dropped_duplicate == 2
    assert [r.instance_id for r in ds.sets[0].instances][0] == "0"
    ds, report = ingest(_write(tmp_path, lines, header), IngestFilters(dedup_checksum=False))
    assert report.dropped_duplicate == 0 and ds.n_instances == 12


def test_malformed_rows_list_line_numbers(tmp_path):
    lines = [_row("a", "0"), "a,1,notanumber,0.2,1,,,,,,", _row("a", "2"), "a,3,0.1,0.2,maybe,,,,,,"]
    with pytest.raises(InputError) as exc:
        ingest(_write(tmp_path, lines))
    msg = str(exc.value)
    assert "line 3" in msg and "line 5" in msg and "line 2" not in msg


def test_duplicate_keys_and_mixed_labels(tmp_path):
    with pytest.raises(InputError, match="duplicate"):
        ingest(_write(tmp_path, [_row("a", "0"), _row("a", "0")]))
    with pytest.raises(InputError, match="mixes labels"):
        ingest(_write(tmp_path, [_row("a", "0", "1"), _row("a", "1", "0")]), IngestFilters(min_instances=1))


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        ingest(tmp_path / "nope.csv")
