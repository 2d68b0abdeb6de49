"""Forecast metrics (MAE, RMSE, directional accuracy), pool-wise
aggregation, and model ranking.

Directional accuracy compares sgn(y_i - y_{i-1}) with sgn(yhat_i - y_{i-1})
against the actual previous value; a zero-zero sign pair counts as a match,
a mixed zero/nonzero pair does not. The first index of a split has no
predecessor and is skipped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(Exception):
    pass


class EmptyInput(MetricError):
    pass


class LengthMismatch(MetricError):
    pass


class TooShort(MetricError):
    pass


class InsufficientPools(MetricError):
    pass


@dataclass(frozen=True)
class MetricSet:
    mae: float
    rmse: float
    da: float  # fraction in [0, 1]


@dataclass(frozen=True)
class PoolReport:
    pool_id: str
    model_id: str
    train: MetricSet
    test: MetricSet


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    std: float | None  # sample divisor; None when only one pool
    pools: int


@dataclass(frozen=True)
class AggregateReport:
    # stats[model_id][split][metric] with split in {train, test},
    # metric in {mae, rmse, da}
    stats: dict

    def value(self, model_id: str, split: str, metric: str) -> float:
        return self.stats[model_id][split][metric].mean

    @property
    def models(self) -> list[str]:
        return sorted(self.stats)


def _check(y, yhat):
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if len(y) != len(yhat):
        raise LengthMismatch(f"{len(y)} vs {len(yhat)}")
    if len(y) == 0:
        raise EmptyInput("empty vectors")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _check(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    y, yhat = _check(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def directional_accuracy(y, yhat) -> float:
    y, yhat = _check(y, yhat)
    if len(y) < 2:
        raise TooShort("need at least 2 points for a direction")
    actual = np.sign(y[1:] - y[:-1])
    predicted = np.sign(yhat[1:] - y[:-1])
    return float(np.mean(actual == predicted))


def metric_set(y, yhat) -> MetricSet:
    return MetricSet(mae=mae(y, yhat), rmse=rmse(y, yhat),
                     da=directional_accuracy(y, yhat))


def aggregate(reports: list[PoolReport]) -> AggregateReport:
    """Pool-wise mean and sample standard deviation per model and metric."""
    if not reports:
        raise EmptyInput("no reports")
    by_model: dict[str, list[PoolReport]] = {}
    for r in reports:
        by_model.setdefault(r.model_id, []).append(r)
    stats = {}
    for model_id, group in by_model.items():
        stats[model_id] = {}
        for split in ("train", "test"):
            stats[model_id][split] = {}
            for metric in ("mae", "rmse", "da"):
                vals = np.array([getattr(getattr(r, split), metric) for r in group])
                std = float(vals.std(ddof=1)) if len(vals) >= 2 else None
                stats[model_id][split][metric] = AggregateStat(
                    mean=float(vals.mean()), std=std, pools=len(vals))
    return AggregateReport(stats=stats)


def rank(agg: AggregateReport) -> list[str]:
    """Descending test DA; ties by ascending test MAE, then model name."""
    return sorted(
        agg.stats,
        key=lambda m: (-agg.value(m, "test", "da"), agg.value(m, "test", "mae"), m),
    )


def report_markdown(agg: AggregateReport, order: list[str] | None = None,
                    display_names: dict | None = None) -> str:
    """Aggregate table in ranking order, percentages to 2 decimals."""
    if order is None:
        order = rank(agg)
    names = display_names or {}
    lines = [
        "| Model | Test MAE | Test RMSE | Dir. Acc. | Train MAE | Train RMSE | Train Acc. |",
        "|---|---|---|---|---|---|---|",
    ]
    for m in order:
        lines.append(
            "| {name} | {tmae:.2f} | {trmse:.2f} | {tda:.2f}% | {rmae:.2f} | {rrmse:.2f} | {rda:.2f}% |".format(
                name=names.get(m, m),
                tmae=agg.value(m, "test", "mae"),
                trmse=agg.value(m, "test", "rmse"),
                tda=agg.value(m, "test", "da") * 100.0,
                rmae=agg.value(m, "train", "mae"),
                rrmse=agg.value(m, "train", "rmse"),
                rda=agg.value(m, "train", "da") * 100.0,
            ))
    return "\n".join(lines) + "\n"


def reports_csv(reports: list[PoolReport]) -> str:
    """Per-pool results: pool, model, split, mae, rmse, da."""
    lines = ["pool,model,split,mae,rmse,da"]
    for r in sorted(reports, key=lambda r: (r.pool_id, r.model_id)):
        for split in ("train", "test"):
            ms = getattr(r, split)
            lines.append(f"{r.pool_id},{r.model_id},{split},{ms.mae!r},{ms.rmse!r},{ms.da!r}")
    return "\n".join(lines) + "\n"


def aggregate_csv(agg: AggregateReport, order: list[str] | None = None) -> str:
    if order is None:
        order = rank(agg)
    lines = ["model,split,metric,mean,std,pools"]
    for m in order:
        for split in ("train", "test"):
            for metric in ("mae", "rmse", "da"):
                st = agg.stats[m][split][metric]
                std = "" if st.std is None else repr(st.std)
                lines.append(f"{m},{split},{metric},{st.mean!r},{std},{st.pools}")
    return "\n".join(lines) + "\n"
