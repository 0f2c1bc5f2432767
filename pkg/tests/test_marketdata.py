import datetime as dt
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powerlaw_portfolio.errors import ParseError, ValidationError
from powerlaw_portfolio.marketdata import (
    BucketSpec,
    PriceTable,
    ReturnMatrix,
    apply_delisting_rule,
    calendar_buckets,
    compute_returns,
    load_bucket_specs,
    load_price_table,
    parse_bucket_arg,
    reconstruct_prices,
    slice_buckets,
    write_price_table,
)


def _write(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _table(prices, start="2020-01-01", symbols=None):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    dates = np.datetime64(start) + np.arange(prices.shape[0])
    symbols = symbols or tuple(f"A{i}" for i in range(prices.shape[1]))
    return PriceTable(dates.astype("datetime64[D]"), tuple(symbols), prices)


def test_load_well_formed(tmp_path):
    path = _write(tmp_path, "date,AAA,BBB\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n2020-01-03,2,3\n")
    table = load_price_table(path)
    assert (table.n_dates, table.n_symbols) == (3, 2)
    assert table.symbols == ("AAA", "BBB")
    np.testing.assert_array_equal(table.column("BBB"), [2, 2.5, 3])


def test_load_sorts_rows_by_date(tmp_path):
    path = _write(tmp_path, "date,A\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n")
    table = load_price_table(path)
    assert np.all(np.diff(table.dates) > np.timedelta64(0, "D"))
    np.testing.assert_array_equal(table.column("A"), [1, 2, 3])


def test_bad_price_cites_row_and_column(tmp_path):
    rows = ["date,A,B"] + [f"2020-01-0{i},{i},{i}" for i in range(1, 5)] + ["2020-01-05,abc,5"]
    path = _write(tmp_path, "\n".join(rows) + "\n")
    with pytest.raises(ParseError) as info:
        load_price_table(path)
    assert info.value.row == 5
    assert info.value.column == "A"
    assert "row 5" in str(info.value)


def test_bad_date_is_parse_error(tmp_path):
    path = _write(tmp_path, "date,A\n2020-01-01,1\nnotadate,2\n")
    with pytest.raises(ParseError):
        load_price_table(path)


def test_interior_gap_names_symbol(tmp_path):
    path = _write(tmp_path, "date,OK,XYZ\n2020-01-01,1,1\n2020-01-02,1,\n2020-01-03,1,2\n")
    with pytest.raises(ValidationError, match="XYZ"):
        load_price_table(path)


def test_trailing_gap_allowed(tmp_path):
    path = _write(tmp_path, "date,A,B\n2020-01-01,1,1\n2020-01-02,1,2\n2020-01-03,1,\n")
    table = load_price_table(path)
    assert math.isnan(table.prices[2, 1])
    assert not table.is_dense


@pytest.mark.parametrize("cell", ["0", "-3"])
def test_nonpositive_price_rejected(tmp_path, cell):
    path = _write(tmp_path, f"date,A\n2020-01-01,1\n2020-01-02,{cell}\n")
    with pytest.raises(ValidationError):
        load_price_table(path)


def test_duplicate_dates_rejected(tmp_path):
    path = _write(tmp_path, "date,A\n2020-01-01,1\n2020-01-01,2\n")
    with pytest.raises(ValidationError, match="duplicate"):
        load_price_table(path)


def test_column_with_one_price_rejected(tmp_path):
    path = _write(tmp_path, "date,A,B\n2020-01-01,1,1\n2020-01-02,1,\n")
    with pytest.raises(ValidationError, match="B"):
        load_price_table(path)


def test_write_then_load_round_trip(tmp_path):
    table = _table([[100, 50], [101.25, 49.5], [99.0, np.nan]])
    write_price_table(table, tmp_path / "p.csv")
    back = load_price_table(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.dates, table.dates)
    np.testing.assert_array_equal(back.prices, table.prices)


def test_arithmetic_return():
    rm = compute_returns(_table([100, 110]), "arithmetic")
    assert rm.returns[0, 0] == pytest.approx(0.10, rel=1e-15)


def test_constant_series_returns_zero():
    rm = compute_returns(_table([100, 100, 100]))
    np.testing.assert_array_equal(rm.returns, 0.0)
    np.testing.assert_array_equal(rm.means, 0.0)


def test_log_return():
    rm = compute_returns(_table([100, 50]), "log")
    assert rm.returns[0, 0] == pytest.approx(-0.6931471805599453, rel=1e-15)


def test_returns_need_dense_table():
    table = _table([[1, 1], [2, 2], [3, np.nan]])
    with pytest.raises(ValidationError):
        compute_returns(table)


def test_unknown_return_kind():
    with pytest.raises(ValidationError):
        compute_returns(_table([1, 2]), "simple")


def test_means_equal_column_means_exactly():
    rng = np.random.default_rng(0)
    prices = 100 * np.cumprod(1 + 0.01 * rng.standard_normal((50, 3)), axis=0)
    rm = compute_returns(_table(prices))
    assert rm.n_periods == 49
    np.testing.assert_array_equal(rm.means, rm.returns.mean(axis=0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-0.5, max_value=0.5), min_size=1, max_size=60), st.floats(1.0, 1000.0))
def test_round_trip_reconstructs_prices(rets, first):
    prices = first * np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(rets))])
    rm = compute_returns(_table(prices))
    back = reconstruct_prices(prices[:1], rm)
    np.testing.assert_allclose(back[:, 0], prices, rtol=1e-12)


def test_delisting_carries_last_price_forward():
    table = _table([[10, 5], [11, 6], [12, np.nan], [13, np.nan]])
    out = apply_delisting_rule(table, BucketSpec("2020-01-01", "2020-01-04"), min_obs=2)
    np.testing.assert_array_equal(out.column("A1"), [5, 6, 6, 6])
    rm = compute_returns(out)
    np.testing.assert_array_equal(rm.returns[1:, 1], 0.0)


def test_delisting_dense_column_unchanged():
    table = _table([[10, 5], [11, 6], [12, 7]])
    out = apply_delisting_rule(table, BucketSpec("2020-01-01", "2020-01-03"), min_obs=2)
    np.testing.assert_array_equal(out.prices, table.prices)
    assert out.warnings == ()


def test_delisting_drops_absent_symbol_with_warning():
    table = _table([[10, np.nan], [11, np.nan], [12, np.nan], [13, 1], [14, 2]])
    out = apply_delisting_rule(table, BucketSpec("2020-01-01", "2020-01-03"), min_obs=2)
    assert out.symbols == ("A0",)
    assert any("A1" in w for w in out.warnings)


def test_delisting_drops_thin_symbol():
    table = _table([[10, 1], [11, 2], [12, np.nan], [13, np.nan]])
    out = apply_delisting_rule(table, BucketSpec("2020-01-01", "2020-01-04"), min_obs=3)
    assert out.symbols == ("A0",)
    assert out.warnings


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), st.integers(3, 12))
def test_delisting_is_idempotent(lead, trail, body):
    col = np.concatenate([np.full(lead, np.nan), 1.0 + np.arange(body), np.full(trail, np.nan)])
    table = _table(np.column_stack([1.0 + np.arange(col.size), col]))
    bucket = BucketSpec(str(table.dates[0]), str(table.dates[-1]))
    once = apply_delisting_rule(table, bucket, min_obs=2)
    twice = apply_delisting_rule(once, bucket, min_obs=2)
    assert once.is_dense
    np.testing.assert_array_equal(once.prices, twice.prices)
    np.testing.assert_array_equal(once.dates, twice.dates)
    assert once.symbols == twice.symbols


def test_bucket_validation():
    with pytest.raises(ValidationError):
        BucketSpec("2020-02-01", "2020-01-01")
    assert BucketSpec("2020-01-01", "2020-12-31").label == "2020-01-01..2020-12-31"


def test_calendar_buckets_twelve_years():
    buckets = calendar_buckets("2007-01-02", "2018-12-31", 3)
    assert [b.label for b in buckets] == ["2007-2009", "2010-2012", "2013-2015", "2016-2018"]


def test_slice_buckets_partition_dates():
    dates = np.arange(np.datetime64("2007-01-01"), np.datetime64("2019-01-01"), 7)
    prices = np.linspace(1, 2, dates.size)[:, None] * np.ones((1, 2))
    table = PriceTable(dates, ("A", "B"), prices)
    buckets = calendar_buckets(dates[0], dates[-1], 3)
    parts = slice_buckets(table, buckets, min_obs=2)
    assert len(parts) == 4
    joined = np.concatenate([p.dates for p in parts])
    np.testing.assert_array_equal(joined, dates)
    for a, b in zip(parts, parts[1:]):
        assert a.dates[-1] < b.dates[0]


def test_single_bucket_is_identity():
    table = _table(np.column_stack([np.arange(1.0, 40.0), np.arange(2.0, 41.0)]))
    (out,) = slice_buckets(table, [BucketSpec(str(table.dates[0]), str(table.dates[-1]))])
    np.testing.assert_array_equal(out.prices, table.prices)


def test_membership_filters_symbols():
    table = _table(np.ones((40, 3)) + np.arange(40)[:, None], symbols=("A", "B", "C"))
    bucket = BucketSpec(str(table.dates[0]), str(table.dates[-1]), "b")
    (out,) = slice_buckets(table, [bucket], {"b": ["A", "C"]})
    assert out.symbols == ("A", "C")


def test_bucket_without_dates_names_label():
    table = _table(np.ones((40, 1)))
    with pytest.raises(ValidationError, match="ancient"):
        slice_buckets(table, [BucketSpec("1990-01-01", "1990-12-31", "ancient")])


def test_overlapping_buckets_rejected():
    with pytest.raises(ValidationError):
        parse_bucket_arg("2020-01-01:2020-06-30,2020-06-01:2020-12-31")


def test_bucket_document(tmp_path):
    doc = {"buckets": [{"label": "x", "start": "2020-01-01", "end": "2020-12-31"}], "membership": {"x": ["A"]}}
    path = tmp_path / "b.json"
    path.write_text(json.dumps(doc))
    buckets, membership = load_bucket_specs(path)
    assert buckets[0].label == "x" and buckets[0].end == dt.date(2020, 12, 31)
    assert membership == {"x": ["A"]}


def test_return_matrix_from_array():
    rm = ReturnMatrix.from_array(np.arange(6.0).reshape(3, 2))
    np.testing.assert_array_equal(rm.means, [2.0, 3.0])
    assert rm.n_assets == 2
