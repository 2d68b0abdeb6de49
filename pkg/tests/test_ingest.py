import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvebench.ingest import (
    CADENCE_SECONDS, DegenerateSplit, EmptyInput, GridGap, IngestError,
    MissingColumn, NetworkUnavailable, SchemaDrift, build_series,
    chronological_split, fetch_pool_snapshots, load_records, parse_timestamp,
)
from .conftest import T0, make_record, make_records


# --- timestamp parsing ------------------------------------------------------

def test_parse_timestamp_iso_offset():
    assert parse_timestamp("2024-07-20T18:00:00+00:00") == T0


def test_parse_timestamp_zulu_suffix():
    assert parse_timestamp("2024-07-20T18:00:00Z") == T0


def test_parse_timestamp_naive_assumed_utc():
    assert parse_timestamp("2024-07-20T18:00:00") == T0


def test_parse_timestamp_numeric_epoch():
    assert parse_timestamp(T0) == T0
    assert parse_timestamp(str(T0)) == T0
    assert parse_timestamp(float(T0)) == T0


def test_parse_timestamp_garbage_raises():
    with pytest.raises(ValueError):
        parse_timestamp("not-a-time")


# --- file loading -----------------------------------------------------------

CSV_HEADER = ("timestamp,pool_address,pool_name,source,virtual_price,"
              "volume_24h,apy,total_supply,balance_0,balance_1\n")


def _write_csv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER)
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")


def _row(i, pool="0xabc", vp="1.01"):
    return [T0 + i * CADENCE_SECONDS, pool, "p", "test", vp,
            "100.0", "2.0", "1e6", "400.0", "600.0"]


def test_load_csv_groups_by_pool(tmp_path):
    path = tmp_path / "pools.csv"
    _write_csv(path, [_row(0), _row(1), _row(0, pool="0xdef")])
    result = load_records(str(path))
    assert not result.errors
    assert set(result.records) == {"0xabc", "0xdef"}
    assert len(result.records["0xabc"]) == 2
    rec = result.records["0xabc"][0]
    assert rec.balances == (400.0, 600.0)
    assert rec.virtual_price == 1.01


def test_load_csv_missing_column_raises(tmp_path):
    path = tmp_path / "bad.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,pool_address\n1,0xabc\n")
    with pytest.raises(MissingColumn):
        load_records(str(path))


def test_load_csv_malformed_rows_collected_with_line_numbers(tmp_path):
    path = tmp_path / "mixed.csv"
    bad_ts = _row(1)
    bad_ts[0] = "yesterday-ish"
    neg_vol = _row(2)
    neg_vol[5] = "-5.0"
    zero_vp = _row(3, vp="0.0")
    _write_csv(path, [_row(0), bad_ts, neg_vol, zero_vp, _row(4)])
    result = load_records(str(path))
    assert len(result.records["0xabc"]) == 2
    kinds = {(e.line, e.kind) for e in result.errors}
    assert kinds == {(3, "unparseable_timestamp"),
                     (4, "negative_quantity"),
                     (5, "negative_quantity")}


def test_load_jsonl_valid_and_invalid_lines(tmp_path):
    path = tmp_path / "pools.jsonl"
    good = {"timestamp": T0, "pool_address": "0xabc", "pool_name": "p",
            "source": "t", "virtual_price": 1.0, "volume_24h": 1.0,
            "apy": 2.0, "total_supply": 3.0, "balances": [1.0, 2.0]}
    missing = {k: v for k, v in good.items() if k != "apy"}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(good) + "\n")
        fh.write("{not json\n")
        fh.write(json.dumps(missing) + "\n")
    result = load_records(str(path))
    assert len(result.records["0xabc"]) == 1
    assert {e.kind for e in result.errors} == {"unparseable_row", "missing_column"}
    assert sorted(e.line for e in result.errors) == [2, 3]


# --- fetch (fixture mode) ---------------------------------------------------

def _fixture_payload(n=4, pool="0xabc"):
    return [{
        "timestamp": T0 + i * CADENCE_SECONDS, "pool_address": pool,
        "pool_name": "p", "source": "api", "virtual_price": 1.0 + i * 0.001,
        "volume_24h": 10.0, "apy": 1.0, "total_supply": 5.0,
        "balances": [1.0, 2.0],
    } for i in range(n)]


def test_fetch_fixture_replay_is_deterministic(tmp_path):
    payload = _fixture_payload()
    (tmp_path / "0xabc.json").write_text(json.dumps(payload))
    a = fetch_pool_snapshots("0xabc", T0, T0 + 10 * CADENCE_SECONDS,
                             fixture_dir=str(tmp_path))
    b = fetch_pool_snapshots("0xabc", T0, T0 + 10 * CADENCE_SECONDS,
                             fixture_dir=str(tmp_path))
    assert a == b
    assert len(a) == 4


def test_fetch_filters_to_requested_range(tmp_path):
    (tmp_path / "0xabc.json").write_text(json.dumps(_fixture_payload(6)))
    recs = fetch_pool_snapshots("0xabc", T0 + CADENCE_SECONDS,
                                T0 + 3 * CADENCE_SECONDS, fixture_dir=str(tmp_path))
    assert [r.timestamp for r in recs] == [T0 + i * CADENCE_SECONDS for i in (1, 2, 3)]


def test_fetch_empty_window_returns_nothing(tmp_path):
    assert fetch_pool_snapshots("0xabc", 10, 5, fixture_dir=str(tmp_path)) == []


def test_fetch_missing_fixture_raises(tmp_path):
    with pytest.raises(EmptyInput):
        fetch_pool_snapshots("0xmissing", 0, 1, fixture_dir=str(tmp_path))


def test_fetch_schema_drift_raises(tmp_path):
    payload = _fixture_payload(2)
    for obj in payload:
        del obj["apy"]
    (tmp_path / "0xabc.json").write_text(json.dumps(payload))
    with pytest.raises(SchemaDrift) as exc:
        fetch_pool_snapshots("0xabc", 0, 2 ** 40, fixture_dir=str(tmp_path))
    assert exc.value.missing == ("apy",)


def test_fetch_without_endpoint_or_fixture_raises():
    with pytest.raises(NetworkUnavailable):
        fetch_pool_snapshots("0xabc", 0, 1)


# --- series assembly --------------------------------------------------------

def test_build_series_orders_and_dedupes_last_write_wins():
    recs = make_records(4)
    dup = make_record(2, vp=9.9)
    series = build_series([recs[3], recs[0], recs[1], recs[2], dup])
    assert len(series) == 4
    assert list(series.timestamps) == [T0 + i * CADENCE_SECONDS for i in range(4)]
    assert series.records[2].virtual_price == 9.9


def test_build_series_strict_gap_raises():
    recs = make_records(5)
    with pytest.raises(GridGap) as exc:
        build_series([recs[0], recs[1], recs[3], recs[4]], strict=True)
    assert exc.value.timestamp == T0 + 2 * CADENCE_SECONDS


def test_build_series_lenient_forward_fills():
    recs = make_records(6)
    series = build_series([recs[0], recs[1], recs[4], recs[5]], strict=False)
    assert len(series) == 6
    assert series.filled_timestamps == (T0 + 2 * CADENCE_SECONDS,
                                        T0 + 3 * CADENCE_SECONDS)
    # fills copy the previous observation
    assert series.records[2].virtual_price == recs[1].virtual_price
    assert series.records[3].balances == recs[1].balances


def test_build_series_off_grid_timestamp_raises():
    a = make_record(0)
    b = make_record(1)
    off = type(b)(**{**b.__dict__, "timestamp": b.timestamp + 17})
    with pytest.raises(GridGap):
        build_series([a, off])


def test_build_series_rejects_multiple_pools():
    with pytest.raises(IngestError):
        build_series([make_record(0, pool="0xabc"), make_record(1, pool="0xdef")])


def test_build_series_empty_raises():
    with pytest.raises(EmptyInput):
        build_series([])


# --- chronological split ----------------------------------------------------

def test_split_default_ratio_floor():
    s = chronological_split(1344)
    assert s.train_end == 1075  # floor(0.8 * 1344)
    assert s.total == 1344


@given(n=st.integers(3, 5000), ratio=st.floats(0.05, 0.95))
def test_split_floor_property(n, ratio):
    try:
        s = chronological_split(n, ratio)
    except DegenerateSplit:
        te = math.floor(ratio * n)
        assert te <= 0 or te >= n
        return
    assert s.train_end == math.floor(ratio * n)
    assert 0 < s.train_end < n


@pytest.mark.parametrize("n,ratio", [(1, 0.8), (5, 0.0), (5, 1.0), (3, 0.1)])
def test_split_degenerate_raises(n, ratio):
    with pytest.raises(DegenerateSplit):
        chronological_split(n, ratio)
