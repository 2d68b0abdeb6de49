"""curvebench: a reproducible benchmark harness for liquidity-pool
time-series forecasting across classical, deep, and quantum models."""

__version__ = "0.1.0"

from .ingest import (RawRecord, PoolSeries, SplitIndex, load_records,
                     fetch_pool_snapshots, build_series, chronological_split)
from .features import (FeatureMatrix, ScalerStats, assemble_matrix,
                       fit_scaler, apply_scaler)
from .metrics import (MetricSet, PoolReport, mae, rmse, directional_accuracy,
                      aggregate, rank)
from .bench import RunConfig, run_benchmark, emit_report
from .synth import generate_synthetic

__all__ = [
    "RawRecord", "PoolSeries", "SplitIndex", "load_records",
    "fetch_pool_snapshots", "build_series", "chronological_split",
    "FeatureMatrix", "ScalerStats", "assemble_matrix", "fit_scaler",
    "apply_scaler", "MetricSet", "PoolReport", "mae", "rmse",
    "directional_accuracy", "aggregate", "rank", "RunConfig",
    "run_benchmark", "emit_report", "generate_synthetic",
]
