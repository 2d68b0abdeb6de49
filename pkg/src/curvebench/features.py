"""Engineered feature space: lags, rolling statistics, change signals,
balance structure metrics, RSI, temporal encodings, forward targets, and
train-statistics scaling.

All feature columns are strictly trailing: row t never reads a raw value
after t. Warm-up rows (insufficient history) carry NaN and are trimmed by
:func:`assemble_matrix` together with the horizon tail.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .ingest import PoolSeries

CADENCE_HOURS = 6
LAG_HOURS = (1, 6, 24, 168)
WINDOW_HOURS = (24, 168, 672)
RSI_PERIOD = 14
HORIZON_STEPS = 4  # 24 hours at 6h cadence
CV_EPSILON = 1e-8

# Hour-denominated horizons map to grid steps by ceiling division; the
# sub-cadence {1, 6} hour lags both collapse to 1 step.
LAG_STEPS = tuple(sorted({math.ceil(h / CADENCE_HOURS) for h in LAG_HOURS}))       # (1, 4, 28)
WINDOW_STEPS = tuple(sorted({math.ceil(h / CADENCE_HOURS) for h in WINDOW_HOURS})) # (4, 28, 112)

MAX_LOOKBACK_STEPS = max(WINDOW_STEPS)  # 112
MIN_SERIES_ROWS = MAX_LOOKBACK_STEPS + HORIZON_STEPS + 1  # 117

# Columns that must never appear in the feature matrix (identifiers and
# anything that reveals the target).
LEAKAGE_BLACKLIST = frozenset({
    "timestamp", "pool_address", "pool_name", "source",
    "virtual_price", "target_24h", "target_return_24h",
})


class FeatureError(Exception):
    pass


class LagExceedsSeries(FeatureError):
    pass


class WindowExceedsSeries(FeatureError):
    pass


class NonPositiveForLog(FeatureError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"non-positive value at row {row}; log change undefined")


class SeriesTooShort(FeatureError):
    pass


class ScalerColumnMismatch(FeatureError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    timestamps: np.ndarray      # (N,) epoch seconds
    columns: tuple[str, ...]    # d names, unique, none blacklisted
    x: np.ndarray               # (N, d)
    y: np.ndarray               # (N,) virtual price 24h ahead
    y_return: np.ndarray        # (N,) percent return over the horizon
    warmup_dropped: int

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ScalerStats:
    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray             # population divisor
    fitted_on: int
    zero_std: tuple[str, ...]   # columns mapped to zero output


def collapsed_lag_hours() -> list[int]:
    """Hour horizons that share a grid-step with another horizon (recorded
    in run manifests; {1, 6} hours both round up to one 6-hour step)."""
    steps: dict[int, list[int]] = {}
    for h in LAG_HOURS:
        steps.setdefault(math.ceil(h / CADENCE_HOURS), []).append(h)
    return sorted(h for group in steps.values() if len(group) > 1 for h in group)


def lag_features(z: np.ndarray, steps=LAG_STEPS, name: str = "z") -> dict[str, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    if max(steps) >= n:
        raise LagExceedsSeries(f"lag {max(steps)} >= series length {n}")
    out = {}
    for lag in steps:
        col = np.full(n, np.nan)
        col[lag:] = z[:-lag]
        out[f"{name}_lag_{lag}"] = col
    return out


def rolling_stats(z: np.ndarray, windows=WINDOW_STEPS, eps: float = CV_EPSILON,
                  name: str = "z") -> dict[str, np.ndarray]:
    """Trailing moving average, population standard deviation, and
    coefficient of variation over each window (window ends at t inclusive)."""
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    out = {}
    for k in windows:
        if k < 2:
            raise FeatureError(f"window must be >= 2, got {k}")
        if k > n:
            raise WindowExceedsSeries(f"window {k} > series length {n}")
        view = np.lib.stride_tricks.sliding_window_view(z, k)
        ma = np.full(n, np.nan)
        sd = np.full(n, np.nan)
        ma[k - 1:] = view.mean(axis=1)
        sd[k - 1:] = view.std(axis=1)  # divisor k
        out[f"{name}_ma_{k}"] = ma
        out[f"{name}_std_{k}"] = sd
        out[f"{name}_cv_{k}"] = sd / (ma + eps)
    return out


def change_signals(z: np.ndarray, name: str = "z", log_channel: bool = True) -> dict[str, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    delta = np.full(n, np.nan)
    delta[1:] = np.diff(z)
    out = {f"{name}_delta": delta}
    if log_channel:
        nonpos = np.flatnonzero(z <= 0)
        if nonpos.size:
            raise NonPositiveForLog(int(nonpos[0]))
        dlog = np.full(n, np.nan)
        dlog[1:] = np.diff(np.log(z))
        out[f"{name}_log_delta"] = dlog
    return out


def balance_metrics(balances: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row (max/total ratio, max-min imbalance, all-zero flag).

    All-zero rows get ratio 0 with the flag set rather than aborting.
    """
    b = np.atleast_2d(np.asarray(balances, dtype=np.float64))
    total = b.sum(axis=1)
    flags = total == 0
    ratio = np.zeros(len(b))
    np.divide(b.max(axis=1), total, out=ratio, where=~flags)
    imbalance = b.max(axis=1) - b.min(axis=1)
    return ratio, imbalance, flags


def rsi(z: np.ndarray, period: int = RSI_PERIOD, name: str = "z") -> np.ndarray:
    """Relative Strength Index from simple trailing means of gains/losses.

    Conventions: flat window -> 50; no gains -> 0; no losses -> 100.
    """
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    if n <= period:
        raise WindowExceedsSeries(f"RSI period {period} >= series length {n}")
    diffs = np.diff(z)
    gains = np.where(diffs > 0, diffs, 0.0)
    losses = np.where(diffs < 0, -diffs, 0.0)
    gwin = np.lib.stride_tricks.sliding_window_view(gains, period).mean(axis=1)
    lwin = np.lib.stride_tricks.sliding_window_view(losses, period).mean(axis=1)
    out = np.full(n, np.nan)
    vals = np.empty_like(gwin)
    flat = (gwin == 0) & (lwin == 0)
    no_gain = (gwin == 0) & (lwin > 0)
    normal = ~flat & ~no_gain
    vals[flat] = 50.0
    vals[no_gain] = 0.0
    vals[normal] = 100.0 / (1.0 + lwin[normal] / gwin[normal])
    out[period:] = vals
    return out


def temporal_encodings(timestamps: np.ndarray) -> dict[str, np.ndarray]:
    """Sinusoidal hour-of-day, day-of-week, and month-of-year pairs
    (zero-based indices, zero phase at period start)."""
    ts = np.asarray(timestamps, dtype=np.int64)
    hours = np.empty(len(ts))
    days = np.empty(len(ts))
    months = np.empty(len(ts))
    for i, t in enumerate(ts):
        dt = datetime.fromtimestamp(int(t), tz=timezone.utc)
        hours[i] = dt.hour
        days[i] = dt.weekday()
        months[i] = dt.month - 1
    return {
        "sin_hour": np.sin(2 * np.pi * hours / 24.0),
        "cos_hour": np.cos(2 * np.pi * hours / 24.0),
        "sin_day": np.sin(2 * np.pi * days / 7.0),
        "cos_day": np.cos(2 * np.pi * days / 7.0),
        "sin_month": np.sin(2 * np.pi * months / 12.0),
        "cos_month": np.cos(2 * np.pi * months / 12.0),
    }


def build_targets(virtual_price: np.ndarray, horizon_steps: int = HORIZON_STEPS) -> tuple[np.ndarray, np.ndarray]:
    """24h-ahead price level and percent return; the horizon tail is NaN."""
    vp = np.asarray(virtual_price, dtype=np.float64)
    n = len(vp)
    if n <= horizon_steps:
        raise SeriesTooShort(f"need more than {horizon_steps} rows, got {n}")
    y = np.full(n, np.nan)
    y[:-horizon_steps] = vp[horizon_steps:]
    y_return = (y / vp - 1.0) * 100.0
    return y, y_return


def assemble_matrix(series: PoolSeries, horizon_steps: int = HORIZON_STEPS) -> FeatureMatrix:
    """Build the full engineered feature matrix for one pool.

    Applies every feature family, drops warm-up and horizon-tail rows, and
    asserts the leakage blacklist. Raises :class:`SeriesTooShort` when the
    series cannot yield a single usable row.
    """
    n = len(series)
    if n < MAX_LOOKBACK_STEPS + horizon_steps + 1:
        raise SeriesTooShort(
            f"need at least {MAX_LOOKBACK_STEPS + horizon_steps + 1} rows, got {n}")

    cols: dict[str, np.ndarray] = {}

    vp = series.column("virtual_price")
    for base, log_ok, include_raw in (
        ("virtual_price", True, False),   # current price is blacklisted
        ("volume_24h", False, True),
        ("apy", False, True),
        ("total_supply", False, True),
    ):
        z = series.column(base)
        if include_raw:
            cols[base] = z
        cols.update(lag_features(z, name=base))
        cols.update(rolling_stats(z, name=base))
        cols.update(change_signals(z, name=base, log_channel=log_ok))

    ratio, imbalance, _flags = balance_metrics(series.balances)
    for name, z in (("balance_ratio", ratio), ("balance_imbalance", imbalance)):
        cols[name] = z
        cols.update(change_signals(z, name=name, log_channel=False))
        for k in WINDOW_STEPS:
            view = np.lib.stride_tricks.sliding_window_view(z, k)
            ma = np.full(n, np.nan)
            ma[k - 1:] = view.mean(axis=1)
            cols[f"{name}_ma_{k}"] = ma

    cols[f"rsi_{RSI_PERIOD}"] = rsi(vp)
    cols.update(temporal_encodings(series.timestamps))

    bad = LEAKAGE_BLACKLIST.intersection(cols)
    if bad:
        raise FeatureError(f"blacklisted feature column(s): {sorted(bad)}")

    y, y_return = build_targets(vp, horizon_steps)
    keep = slice(MAX_LOOKBACK_STEPS, n - horizon_steps)
    names = tuple(cols)
    x = np.column_stack([cols[c][keep] for c in names])
    y = y[keep]
    y_return = y_return[keep]
    if np.isnan(x).any() or np.isnan(y).any():
        raise FeatureError("NaN left in feature matrix after warm-up trimming")
    return FeatureMatrix(
        timestamps=series.timestamps[keep],
        columns=names,
        x=x,
        y=y,
        y_return=y_return,
        warmup_dropped=MAX_LOOKBACK_STEPS,
    )


def _zero_std_mask(mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Columns that are (numerically) constant: roundoff can leave a std of
    a few ULPs on an exactly-constant column, which must not be scaled by."""
    return std <= 1e-12 * np.maximum(1.0, np.abs(mean))


def fit_scaler(matrix: FeatureMatrix, train_end: int | None = None) -> ScalerStats:
    """Column-wise z-score statistics from the training rows only."""
    rows = matrix.x if train_end is None else matrix.x[:train_end]
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)  # population divisor
    zero_mask = _zero_std_mask(mean, std)
    zero = tuple(c for c, z in zip(matrix.columns, zero_mask) if z)
    return ScalerStats(columns=matrix.columns, mean=mean, std=std,
                       fitted_on=rows.shape[0], zero_std=zero)


def apply_scaler(stats: ScalerStats, matrix: FeatureMatrix) -> FeatureMatrix:
    if stats.columns != matrix.columns:
        raise ScalerColumnMismatch("scaler fitted on different columns")
    zero_mask = _zero_std_mask(stats.mean, stats.std)
    safe = np.where(zero_mask, 1.0, stats.std)
    x = (matrix.x - stats.mean) / safe
    x[:, zero_mask] = 0.0
    return FeatureMatrix(
        timestamps=matrix.timestamps,
        columns=matrix.columns,
        x=x,
        y=matrix.y,
        y_return=matrix.y_return,
        warmup_dropped=matrix.warmup_dropped,
    )


def export_matrix_csv(matrix: FeatureMatrix, path: str) -> None:
    """CSV export with a JSON column-manifest sidecar for audit."""
    header = ["timestamp", *matrix.columns, "target_24h", "target_return_24h"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(matrix.n_rows):
            row = [str(int(matrix.timestamps[i]))]
            row += [repr(float(v)) for v in matrix.x[i]]
            row += [repr(float(matrix.y[i])), repr(float(matrix.y_return[i]))]
            fh.write(",".join(row) + "\n")
    with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"columns": list(matrix.columns),
                   "warmup_dropped": matrix.warmup_dropped,
                   "lag_steps": list(LAG_STEPS),
                   "window_steps": list(WINDOW_STEPS),
                   "collapsed_lag_hours": collapsed_lag_hours(),
                   "horizon_steps": HORIZON_STEPS}, fh, indent=2)
