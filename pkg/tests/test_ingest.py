import datetime
import io

import numpy as np
import pytest

from conftest import make_series
from forecast_direction_audit import ingest
from forecast_direction_audit.errors import DegenerateRange
from forecast_direction_audit.errors import EmptyPartition
from forecast_direction_audit.errors import EmptySeries
from forecast_direction_audit.errors import InsufficientData
from forecast_direction_audit.errors import InvalidSeries
from forecast_direction_audit.errors import MalformedRow
from forecast_direction_audit.errors import MissingColumn
from forecast_direction_audit.ingest import SplitSpec


def _csv(text):
    return io.BytesIO(text.encode("utf-8"))


def test_load_price_csv_three_rows():
    series = ingest.load_price_csv(
        _csv("Date,Close\n2017-01-02,10.0\n2017-01-03,10.5\n2017-01-04,10.2\n"), "ABC"
    )
    assert len(series) == 3
    assert series.symbol == "ABC"
    assert list(series.closes) == [10.0, 10.5, 10.2]


def test_load_price_csv_sorts_shuffled_rows():
    text = (
        "Date,Open,Close,Volume\n"
        "2017-01-05,1,13,5\n"
        "2017-01-02,1,10,5\n"
        "2017-01-06,1,14,5\n"
        "2017-01-03,1,11,5\n"
        "2017-01-04,1,12,5\n"
    )
    series = ingest.load_price_csv(_csv(text), "ABC")
    assert len(series) == 5
    assert all(a < b for a, b in zip(series.dates, series.dates[1:]))
    assert list(series.closes) == [10.0, 11.0, 12.0, 13.0, 14.0]


def test_load_price_csv_accepts_bom():
    series = ingest.load_price_csv(io.BytesIO(b"\xef\xbb\xbfDate,Close\n2017-01-02,1\n2017-01-03,2\n"), "ABC")
    assert len(series) == 2


def test_load_price_csv_header_only():
    with pytest.raises(EmptySeries):
        ingest.load_price_csv(_csv("Date,Close\n"), "ABC")


def test_load_price_csv_missing_column():
    with pytest.raises(MissingColumn) as info:
        ingest.load_price_csv(_csv("Date,Open\n2017-01-02,1\n"), "ABC")
    assert info.value.column == "Close"


def test_load_price_csv_malformed_row_names_line():
    text = "Date,Close\n2017-01-02,10\n2017-01-03,abc\n2017-01-04,11\n"
    with pytest.raises(MalformedRow) as info:
        ingest.load_price_csv(_csv(text), "ABC")
    assert info.value.row == 3


def test_load_price_csv_rejects_zero_and_duplicates():
    with pytest.raises(MalformedRow):
        ingest.load_price_csv(_csv("Date,Close\n2017-01-02,10\n2017-01-03,0\n"), "ABC")
    with pytest.raises(MalformedRow):
        ingest.load_price_csv(_csv("Date,Close\n2017-01-02,10\n2017-01-02,11\n"), "ABC")


def test_write_price_csv_reloads():
    series = make_series([100.0, 101.25, 99.5])
    buffer = io.StringIO()
    ingest.write_price_csv(series, buffer)
    again = ingest.load_price_csv(io.StringIO(buffer.getvalue()), "TEST")
    assert again.dates == series.dates
    assert np.array_equal(again.closes, series.closes)


def test_price_series_invariants():
    with pytest.raises(InvalidSeries):
        make_series([1.0])
    with pytest.raises(InvalidSeries):
        make_series([1.0, -2.0])
    day = datetime.date(2017, 1, 2)
    with pytest.raises(InvalidSeries):
        ingest.PriceSeries("X", (day, day), np.array([1.0, 2.0]))


def test_verify_integrity_clean_series():
    report = ingest.verify_integrity(make_series(np.linspace(10, 20, 10)))
    assert report.ok
    assert (report.missing_value_count, report.nonpositive_price_count, report.duplicate_date_count) == (0, 0, 0)


def test_verify_integrity_raw_rows():
    raw = ingest.read_raw_rows(_csv("Date,Close\n2017-01-02,10\n2017-01-03,0\n2017-01-04,11\n"), "ABC")
    report = ingest.verify_integrity(raw)
    assert report.nonpositive_price_count == 1
    assert not report.ok

    raw = ingest.read_raw_rows(_csv("Date,Close\n2017-01-02,10\n2017-01-02,11\n2017-01-03,null\n"), "ABC")
    report = ingest.verify_integrity(raw)
    assert report.duplicate_date_count == 1
    assert report.missing_value_count == 1
    assert not report.ok


def test_normalize_minmax_full_range():
    norm = ingest.normalize_minmax(make_series([100.0, 150.0, 200.0]))
    assert list(norm.values) == [0.0, 0.5, 1.0]


def test_normalize_minmax_constant():
    with pytest.raises(DegenerateRange):
        ingest.normalize_minmax(make_series([100.0, 100.0, 100.0]))


def test_normalize_minmax_out_of_fit_range():
    norm = ingest.normalize_minmax(make_series([100.0, 200.0, 300.0]), range(0, 2))
    assert norm.values[2] == 2.0
    assert (norm.scale_min, norm.scale_max) == (100.0, 200.0)


def test_denormalize_roundtrip(rng):
    series = make_series(rng.uniform(50, 250, size=40))
    norm = ingest.normalize_minmax(series, range(0, 30))
    assert ingest.denormalize(norm, 0.0) == norm.scale_min
    assert ingest.denormalize(norm, 1.0) == norm.scale_max
    restored = ingest.denormalize(norm, norm.values)
    assert np.allclose(restored, series.closes, rtol=1e-12, atol=0)


def test_denormalize_single_value():
    norm = ingest.normalize_minmax(make_series([100.0, 200.0]))
    assert abs(ingest.denormalize(norm, 0.372) - 137.2) <= 137.2 * 1e-12


def test_segment_keeps_scale():
    norm = ingest.normalize_minmax(make_series([100.0, 200.0, 300.0, 400.0]), range(0, 2))
    tail = norm.segment(2, 4)
    assert list(tail.values) == [2.0, 3.0]
    assert tail.scale_min == 100.0
    assert tail.base.dates == norm.base.dates[2:]


def test_make_windows_layout():
    norm = ingest.normalize_minmax(make_series(np.arange(1.0, 11.0)))
    data = ingest.make_windows(norm, 5, 0)
    assert len(data) == 5
    assert np.array_equal(data.inputs[0], norm.values[0:5])
    assert data.targets[0] == norm.values[5]
    assert list(data.source_indices) == [5, 6, 7, 8, 9]


def test_make_windows_hop():
    norm = ingest.normalize_minmax(make_series(np.arange(1.0, 11.0)))
    data = ingest.make_windows(norm, 5, 3)
    assert len(data) == 2
    assert data.targets[1] == norm.values[1 + 5 + 3]


def test_make_windows_counts_for_all_shapes():
    norm = ingest.normalize_minmax(make_series(np.arange(1.0, 31.0)))
    for length in range(1, 10):
        for hop in range(0, 5):
            data = ingest.make_windows(norm, length, hop)
            assert len(data) == 30 - length - hop
            assert data.inputs.shape == (30 - length - hop, length)
            assert np.all(np.diff(data.source_indices) > 0)


def test_make_windows_too_short():
    norm = ingest.normalize_minmax(make_series([1.0, 2.0, 3.0, 4.0, 5.0]))
    with pytest.raises(InsufficientData):
        ingest.make_windows(norm, 5, 0)


def test_split_by_date():
    series = make_series([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    split = SplitSpec(series.dates[3], series.dates[4], series.dates[5])
    train, test = ingest.split_by_date(series, split)
    assert len(train) == 4
    assert len(test) == 2
    assert set(train.dates).isdisjoint(test.dates)


def test_split_by_date_empty_test():
    series = make_series([1.0, 2.0, 3.0, 4.0])
    late = series.dates[-1] + datetime.timedelta(days=10)
    with pytest.raises(EmptyPartition):
        ingest.split_by_date(series, SplitSpec(series.dates[-1], late, late + datetime.timedelta(days=5)))


def test_split_spec_parse_reference():
    split = SplitSpec.parse("2016-12-31,2017-01-10,2017-06-02")
    assert split == ingest.REFERENCE_SPLIT
    assert str(split) == "2016-12-31,2017-01-10,2017-06-02"


def test_join_partitions_skips_gap():
    series = make_series(np.arange(1.0, 11.0))
    train, test = ingest.split_by_date(series, SplitSpec(series.dates[3], series.dates[6], series.dates[9]))
    joined = ingest.join_partitions(train, test)
    assert len(joined) == 8
    assert list(joined.closes) == [1.0, 2.0, 3.0, 4.0, 7.0, 8.0, 9.0, 10.0]


def test_screen_series_random_walk(rng):
    closes = 100.0 + np.cumsum(rng.standard_normal(512))
    result = ingest.screen_series(make_series(closes - closes.min() + 10.0))
    assert 0.0 < result.hurst < 1.0
    assert result.label in ("persistent", "random", "anti-persistent")
    assert result.accepted == (result.r_squared >= 0.9)
