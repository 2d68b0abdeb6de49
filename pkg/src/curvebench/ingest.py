"""Pool snapshot ingestion: file loading, HTTP/fixture fetching, grid
validation and chronological splitting.

All timestamps are normalized to UTC epoch seconds. A pool series lives on
a uniform 6-hour grid; strict mode refuses gaps, lenient mode forward-fills
them and reports what was filled.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional

import numpy as np

CADENCE_SECONDS = 6 * 3600

REQUIRED_FIELDS = (
    "timestamp",
    "pool_address",
    "pool_name",
    "source",
    "virtual_price",
    "volume_24h",
    "apy",
    "total_supply",
)


class IngestError(Exception):
    """Base class for ingestion failures."""


class MissingColumn(IngestError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"missing required column: {column}")


class EmptyInput(IngestError):
    pass


class GridGap(IngestError):
    def __init__(self, timestamp: int):
        self.timestamp = timestamp
        super().__init__(f"missing 6h grid slot at {timestamp}")


class DegenerateSplit(IngestError):
    pass


class NetworkUnavailable(IngestError):
    pass


class SchemaDrift(IngestError):
    def __init__(self, missing: Iterable[str]):
        self.missing = tuple(missing)
        super().__init__(f"response missing required field(s): {', '.join(self.missing)}")


@dataclass(frozen=True)
class RowError:
    """A malformed input row, reported rather than raised."""

    line: int
    kind: str  # "unparseable_timestamp" | "negative_quantity" | "missing_column"
    message: str


@dataclass(frozen=True)
class RawRecord:
    timestamp: int  # UTC epoch seconds
    pool_address: str
    pool_name: str
    source: str
    virtual_price: float
    volume_24h: float
    apy: float
    total_supply: float
    balances: tuple[float, ...]


@dataclass(frozen=True)
class PoolSeries:
    pool_id: str
    records: tuple[RawRecord, ...]
    cadence: int = CADENCE_SECONDS
    filled_timestamps: tuple[int, ...] = ()  # lenient-mode forward fills

    def __len__(self) -> int:
        return len(self.records)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([r.timestamp for r in self.records], dtype=np.int64)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    @property
    def balances(self) -> np.ndarray:
        return np.array([r.balances for r in self.records], dtype=np.float64)


@dataclass(frozen=True)
class SplitIndex:
    train_end: int  # exclusive
    total: int
    ratio: float


@dataclass
class LoadResult:
    records: dict[str, list[RawRecord]] = field(default_factory=dict)
    errors: list[RowError] = field(default_factory=list)


def parse_timestamp(value) -> int:
    """Parse an ISO-8601 string or numeric epoch into UTC seconds."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return int(value)
    text = str(value).strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        try:
            return int(float(text))
        except ValueError:
            raise ValueError(f"unparseable timestamp: {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _record_from_mapping(row: dict, balances: list[float], line: int) -> tuple[Optional[RawRecord], Optional[RowError]]:
    try:
        ts = parse_timestamp(row["timestamp"])
    except ValueError as exc:
        return None, RowError(line, "unparseable_timestamp", str(exc))
    vp = float(row["virtual_price"])
    vol = float(row["volume_24h"])
    supply = float(row["total_supply"])
    if vp <= 0:
        return None, RowError(line, "negative_quantity", f"virtual_price must be positive, got {vp}")
    if vol < 0:
        return None, RowError(line, "negative_quantity", f"volume_24h must be non-negative, got {vol}")
    if supply < 0:
        return None, RowError(line, "negative_quantity", f"total_supply must be non-negative, got {supply}")
    if any(b < 0 for b in balances):
        return None, RowError(line, "negative_quantity", "balances must be non-negative")
    rec = RawRecord(
        timestamp=ts,
        pool_address=str(row["pool_address"]),
        pool_name=str(row["pool_name"]),
        source=str(row["source"]),
        virtual_price=vp,
        volume_24h=vol,
        apy=float(row["apy"]),
        total_supply=supply,
        balances=tuple(float(b) for b in balances),
    )
    return rec, None


def load_records(path: str, format: Optional[str] = None) -> LoadResult:
    """Load raw records from a CSV or JSON-lines file, grouped by pool.

    Malformed rows are collected in ``result.errors`` with their line
    numbers; a missing header column raises :class:`MissingColumn`.
    """
    if format is None:
        format = "jsonl" if path.endswith((".jsonl", ".ndjson", ".json")) else "csv"
    if format == "csv":
        return _load_csv(path)
    if format in ("jsonl", "json-lines"):
        return _load_jsonl(path)
    raise ValueError(f"unknown format: {format}")


def _load_csv(path: str) -> LoadResult:
    result = LoadResult()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return result  # empty file
        for col in REQUIRED_FIELDS:
            if col not in reader.fieldnames:
                raise MissingColumn(col)
        balance_cols = sorted(
            (c for c in reader.fieldnames if c.startswith("balance_")),
            key=lambda c: int(c.split("_")[1]),
        )
        for line, row in enumerate(reader, start=2):
            try:
                balances = [float(row[c]) for c in balance_cols if row[c] not in (None, "")]
                rec, err = _record_from_mapping(row, balances, line)
            except (TypeError, ValueError, KeyError) as exc:
                result.errors.append(RowError(line, "unparseable_row", str(exc)))
                continue
            if err is not None:
                result.errors.append(err)
            else:
                result.records.setdefault(rec.pool_address, []).append(rec)
    return result


def _load_jsonl(path: str) -> LoadResult:
    result = LoadResult()
    with open(path, encoding="utf-8") as fh:
        for line, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                result.errors.append(RowError(line, "unparseable_row", str(exc)))
                continue
            missing = [c for c in REQUIRED_FIELDS if c not in obj]
            if missing:
                result.errors.append(RowError(line, "missing_column", f"missing {missing}"))
                continue
            try:
                rec, err = _record_from_mapping(obj, list(obj.get("balances", [])), line)
            except (TypeError, ValueError) as exc:
                result.errors.append(RowError(line, "unparseable_row", str(exc)))
                continue
            if err is not None:
                result.errors.append(err)
            else:
                result.records.setdefault(rec.pool_address, []).append(rec)
    return result


def fetch_pool_snapshots(
    pool_id: str,
    start: int,
    end: int,
    endpoint: Optional[str] = None,
    fixture_dir: Optional[str] = None,
    session=None,
) -> list[RawRecord]:
    """Fetch snapshots for one pool in ``[start, end]`` (epoch seconds).

    With ``fixture_dir`` set, replays the stored response for the pool
    byte-for-byte; otherwise performs a live HTTP GET against ``endpoint``.
    """
    if start > end:
        return []
    if fixture_dir is not None:
        fixture_path = os.path.join(fixture_dir, f"{pool_id}.json")
        if not os.path.exists(fixture_path):
            raise EmptyInput(f"no fixture for pool {pool_id} in {fixture_dir}")
        with open(fixture_path, "rb") as fh:
            payload = json.loads(fh.read().decode("utf-8"))
    else:
        if endpoint is None:
            raise NetworkUnavailable("no endpoint configured and no fixture directory")
        import requests

        try:
            if session is None:
                session = requests
            resp = session.get(endpoint, params={"pool": pool_id, "from": start, "to": end}, timeout=30)
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:  # pragma: no cover - needs live network
            raise NetworkUnavailable(str(exc)) from exc

    records = []
    for obj in payload:
        missing = [c for c in REQUIRED_FIELDS if c not in obj]
        if missing:
            raise SchemaDrift(missing)
        rec, err = _record_from_mapping(obj, list(obj.get("balances", [])), line=-1)
        if err is not None:
            raise IngestError(err.message)
        if start <= rec.timestamp <= end:
            records.append(rec)
    return records


def build_series(records: Iterable[RawRecord], strict: bool = True) -> PoolSeries:
    """Order records chronologically and validate the 6-hour grid.

    Duplicate timestamps collapse last-write-wins. Strict mode raises
    :class:`GridGap` on a missing slot; lenient mode forward-fills the gap
    and records the filled timestamps.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no records")
    pool_ids = {r.pool_address for r in records}
    if len(pool_ids) != 1:
        raise IngestError(f"records span multiple pools: {sorted(pool_ids)}")
    by_ts: dict[int, RawRecord] = {}
    for rec in records:  # later reads supersede earlier ones
        by_ts[rec.timestamp] = rec
    ordered = [by_ts[t] for t in sorted(by_ts)]
    lengths = {len(r.balances) for r in ordered}
    if len(lengths) != 1:
        raise IngestError("inconsistent balance vector length within pool")

    filled: list[int] = []
    out = [ordered[0]]
    for rec in ordered[1:]:
        expected = out[-1].timestamp + CADENCE_SECONDS
        while rec.timestamp > expected:
            if strict:
                raise GridGap(expected)
            prev = out[-1]
            out.append(RawRecord(
                timestamp=expected,
                pool_address=prev.pool_address,
                pool_name=prev.pool_name,
                source=prev.source,
                virtual_price=prev.virtual_price,
                volume_24h=prev.volume_24h,
                apy=prev.apy,
                total_supply=prev.total_supply,
                balances=prev.balances,
            ))
            filled.append(expected)
            expected += CADENCE_SECONDS
        if rec.timestamp != expected:
            raise GridGap(expected)  # off-grid timestamp
        out.append(rec)
    return PoolSeries(
        pool_id=ordered[0].pool_address,
        records=tuple(out),
        filled_timestamps=tuple(filled),
    )


def chronological_split(n_rows: int, ratio: float = 0.8) -> SplitIndex:
    """Earliest ``ratio`` of rows train, remainder test; never shuffles time."""
    if n_rows < 2:
        raise DegenerateSplit(f"need at least 2 rows, got {n_rows}")
    if not 0.0 < ratio < 1.0:
        raise DegenerateSplit(f"ratio must be in (0,1), got {ratio}")
    train_end = math.floor(ratio * n_rows)
    if train_end <= 0 or train_end >= n_rows:
        raise DegenerateSplit(f"split of {n_rows} rows at ratio {ratio} leaves an empty partition")
    return SplitIndex(train_end=train_end, total=n_rows, ratio=ratio)
