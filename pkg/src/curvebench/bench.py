"""End-to-end benchmark runner: the models x pools grid over identical
feature matrices, with per-cell failure isolation, manifests, and report
emission.

All randomness in a run derives from hash(seed, pool, model), so a fixed
seed reproduces every artifact byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .deep import TrainConfig, make_windows, train_deep
from .deep.lstm import init_lstm, lstm_forward
from .deep.transformer import init_transformer, transformer_forward
from .features import (apply_scaler, assemble_matrix, collapsed_lag_hours,
                       fit_scaler, FeatureMatrix, LAG_STEPS, WINDOW_STEPS)
from .ingest import build_series, chronological_split, load_records
from .metrics import (aggregate, aggregate_csv, metric_set, PoolReport, rank,
                      report_markdown, reports_csv)
from .quantum import compress_features, fit_kernel_regressor, kernel_predict
from .quantum.qnn import QnnTrainConfig, qnn_expectation, train_qnn
from .trees import fit_random_forest, fit_xgboost

MODEL_IDS = ("random_forest", "xgboost", "lstm", "transformer", "qnn", "qsvm_qnn")
QUANTUM_MODELS = ("qnn", "qsvm_qnn")

DISPLAY_NAMES = {
    "random_forest": "Random Forest",
    "xgboost": "XGBoost",
    "lstm": "LSTM",
    "transformer": "Transformer",
    "qnn": "QNN",
    "qsvm_qnn": "QSVM-QNN",
}


@dataclass
class RunConfig:
    data_dir: str
    out_dir: str
    pools: list[str] | None = None       # pool ids (csv stems); None = all
    models: list[str] = field(default_factory=lambda: list(MODEL_IDS))
    seed: int = 0
    split_ratio: float = 0.8
    horizon_steps: int = 4
    workers: int = 1
    endpoint: str | None = None
    model_params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(**obj)

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def cell_seed(seed: int, pool: str, model: str) -> int:
    h = hashlib.sha256(f"{seed}:{pool}:{model}".encode()).hexdigest()
    return int(h[:8], 16)


def _val_carve(train_end: int, fraction: float = 0.1) -> int:
    """Start row of the chronological validation tail within train."""
    return train_end - max(1, int(train_end * fraction))


# --- model adapters -------------------------------------------------------
# Each fit_* returns a predictor: predict(X_full, start, stop) -> yhat.

def _fit_random_forest(X, y, train_end, seed, hp):
    forest = fit_random_forest(
        X[:train_end], y[:train_end],
        n_trees=hp.get("n_trees", 150),
        max_depth=hp.get("max_depth"),
        min_samples_leaf=hp.get("min_samples_leaf", 5),
        seed=seed,
    )
    return lambda Xf, start, stop: forest.predict(Xf[start:stop])


def _fit_xgboost(X, y, train_end, seed, hp):
    vs = _val_carve(train_end)
    # Round cap below the library default keeps the grid inside the
    # desk-scale budget; validation RMSE flattens well before it.
    model = fit_xgboost(
        X[:vs], y[:vs], X[vs:train_end], y[vs:train_end],
        max_depth=hp.get("max_depth", 6),
        etas=tuple(hp.get("etas", (0.03, 0.1, 0.3))),
        lam=hp.get("lam", 1.0),
        gamma=hp.get("gamma", 0.0),
        n_rounds=hp.get("n_rounds", 80),
        early_stop=hp.get("early_stop", 10),
    )
    return lambda Xf, start, stop: model.predict(Xf[start:stop])


def _fit_deep(kind, X, y, train_end, seed, hp):
    window = hp.get("window", 28)
    if kind == "lstm":
        params = init_lstm(X.shape[1], hidden=hp.get("hidden", 64),
                           layers=hp.get("layers", 2), seed=seed)
        forward = lstm_forward
    else:
        params = init_transformer(X.shape[1], d_model=hp.get("d_model", 128),
                                  heads=hp.get("heads", 8),
                                  blocks=hp.get("blocks", 2),
                                  d_ff=hp.get("d_ff", 256), seed=seed)
        forward = transformer_forward
    vs = _val_carve(train_end)
    # Training windows are stride-subsampled and batched larger than the
    # library default to fit the grid budget; evaluation always uses every
    # row.
    stride = hp.get("train_stride", 6)
    Xw_train = make_windows(X, np.arange(0, vs, stride), window)
    Xw_val = make_windows(X, np.arange(vs, train_end), window)
    config = TrainConfig(max_epochs=hp.get("max_epochs",
                                           20 if kind == "transformer" else 40),
                         patience=hp.get("patience", 10),
                         batch_size=hp.get("batch_size", 128),
                         alpha=hp.get("alpha", 1e-3), seed=seed)
    result = train_deep(kind, params, (Xw_train, y[0:vs:stride]),
                        (Xw_val, y[vs:train_end]), config)
    best = result.params

    def predict(Xf, start, stop, batch=256):
        rows = np.arange(start, stop)
        out = np.empty(len(rows))
        for s in range(0, len(rows), batch):
            Xw = make_windows(Xf, rows[s:s + batch], window)
            out[s:s + batch] = forward(best, Xw)[0]
        return out

    return predict


def _fit_qnn(X, y, train_end, seed, hp):
    angles = compress_features(X)
    vs = _val_carve(train_end)
    max_rows = hp.get("max_train_rows", 128)
    max_val = hp.get("max_val_rows", 32)
    lo = max(0, vs - max_rows)
    val_lo = max(vs, train_end - max_val)
    config = QnnTrainConfig(epochs=hp.get("epochs", 60),
                            patience=hp.get("patience", 10),
                            alpha=hp.get("alpha", 0.05), seed=seed)
    result = train_qnn(angles[lo:vs], y[lo:vs],
                       angles[val_lo:train_end], y[val_lo:train_end], config)
    params = result.params

    def predict(Xf, start, stop):
        af = compress_features(Xf[start:stop])
        exps = np.array([qnn_expectation(a, params.theta) for a in af])
        return params.w * exps + params.b

    return predict


def _fit_qsvm(X, y, train_end, seed, hp):
    angles = compress_features(X)
    max_rows = hp.get("max_train_rows", 256)  # bounds the O(m^2) Gram cost
    lo = max(0, train_end - max_rows)
    model = fit_kernel_regressor(angles[lo:train_end], y[lo:train_end],
                                 ridge=hp.get("ridge", 1e-3))
    return lambda Xf, start, stop: kernel_predict(model, compress_features(Xf[start:stop]))


_FITTERS = {
    "random_forest": _fit_random_forest,
    "xgboost": _fit_xgboost,
    "lstm": lambda X, y, te, s, hp: _fit_deep("lstm", X, y, te, s, hp),
    "transformer": lambda X, y, te, s, hp: _fit_deep("transformer", X, y, te, s, hp),
    "qnn": _fit_qnn,
    "qsvm_qnn": _fit_qsvm,
}


# --- grid execution -------------------------------------------------------

@dataclass
class CellResult:
    pool_id: str
    model_id: str
    report: PoolReport | None
    error: str | None
    wall_clock: float


@dataclass
class PoolRun:
    pool_id: str
    n_rows: int
    train_end: int
    warmup_dropped: int
    matrix_sha256: str
    cells: list = field(default_factory=list)
    columns: tuple = ()


@dataclass
class RunResult:
    config: RunConfig
    pools: list
    reports: list
    agg: object | None
    ranking: list
    manifest: dict

    @property
    def failed_cells(self) -> list:
        return [c for p in self.pools for c in p.cells if c.error is not None]


def discover_pools(data_dir: str) -> list[str]:
    return sorted(os.path.splitext(f)[0] for f in os.listdir(data_dir)
                  if f.endswith(".csv"))


def _prepare_pool(data_dir: str, pool: str, split_ratio: float,
                  horizon_steps: int) -> tuple[FeatureMatrix, int, str]:
    result = load_records(os.path.join(data_dir, f"{pool}.csv"))
    if pool not in result.records:
        raise KeyError(f"pool {pool} not present in its own file")
    series = build_series(result.records[pool], strict=True)
    matrix = assemble_matrix(series, horizon_steps=horizon_steps)
    split = chronological_split(matrix.n_rows, split_ratio)
    stats = fit_scaler(matrix, split.train_end)
    scaled = apply_scaler(stats, matrix)
    sha = hashlib.sha256(np.ascontiguousarray(scaled.x).tobytes()
                         + scaled.y.tobytes()).hexdigest()
    return scaled, split.train_end, sha


def run_pool(config: RunConfig, pool: str) -> PoolRun:
    """Train and evaluate every configured model on one pool's matrix.

    A failing cell records its error and leaves the other cells untouched.
    """
    matrix, train_end, sha = _prepare_pool(config.data_dir, pool,
                                           config.split_ratio,
                                           config.horizon_steps)
    run = PoolRun(pool_id=pool, n_rows=matrix.n_rows, train_end=train_end,
                  warmup_dropped=matrix.warmup_dropped, matrix_sha256=sha,
                  columns=matrix.columns)
    X, y = matrix.x, matrix.y
    for model_id in config.models:
        hp = config.model_params.get(model_id, {})
        seed = cell_seed(config.seed, pool, model_id)
        t0 = time.perf_counter()
        try:
            predict = _FITTERS[model_id](X, y, train_end, seed, hp)
            train_pred = predict(X, 0, train_end)
            test_pred = predict(X, train_end, matrix.n_rows)
            report = PoolReport(pool_id=pool, model_id=model_id,
                                train=metric_set(y[:train_end], train_pred),
                                test=metric_set(y[train_end:], test_pred))
            run.cells.append(CellResult(pool, model_id, report, None,
                                        time.perf_counter() - t0))
        except Exception as exc:  # noqa: BLE001 - cell isolation by contract
            run.cells.append(CellResult(pool, model_id, None,
                                        f"{type(exc).__name__}: {exc}",
                                        time.perf_counter() - t0))
    return run


def run_benchmark(config: RunConfig) -> RunResult:
    pools = config.pools or discover_pools(config.data_dir)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool_exec:
            runs = list(pool_exec.map(run_pool, [config] * len(pools), pools))
    else:
        runs = [run_pool(config, p) for p in pools]

    reports = [c.report for r in runs for c in r.cells if c.report is not None]
    agg = aggregate(reports) if reports else None
    ranking = rank(agg) if agg is not None else []

    wall_clock = {m: 0.0 for m in config.models}
    for r in runs:
        for c in r.cells:
            wall_clock[c.model_id] += c.wall_clock
    manifest = {
        "config": json.loads(config.canonical()),
        "config_sha256": config.digest(),
        "software": {"curvebench": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "feature_space": {
            "columns": list(runs[0].columns) if runs else [],
            "lag_steps": list(LAG_STEPS),
            "window_steps": list(WINDOW_STEPS),
            "collapsed_lag_hours": collapsed_lag_hours(),
        },
        "pools": {
            r.pool_id: {"rows": r.n_rows, "train_end": r.train_end,
                        "warmup_dropped": r.warmup_dropped,
                        "matrix_sha256": r.matrix_sha256}
            for r in runs
        },
        "cells": [
            {"pool": c.pool_id, "model": c.model_id,
             "wall_clock_s": c.wall_clock, "error": c.error}
            for r in runs for c in r.cells
        ],
        "wall_clock_by_model_s": wall_clock,
        "ranking": ranking,
    }
    return RunResult(config=config, pools=runs, reports=reports, agg=agg,
                     ranking=ranking, manifest=manifest)


def emit_report(result: RunResult, out_dir: str | None = None) -> dict[str, str]:
    """Write per-pool CSV, aggregate CSV, Markdown table, and manifest."""
    out_dir = out_dir or result.config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def write(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        paths[name] = path

    write("pool_reports.csv", reports_csv(result.reports))
    if result.agg is not None:
        write("aggregate.csv", aggregate_csv(result.agg, result.ranking))
        write("report.md", report_markdown(result.agg, result.ranking,
                                           DISPLAY_NAMES))
    else:
        write("aggregate.csv", "model,split,metric,mean,std,pools\n")
        write("report.md",
              "| Model | Test MAE | Test RMSE | Dir. Acc. | Train MAE | Train RMSE | Train Acc. |\n"
              "|---|---|---|---|---|---|---|\n")
    write("manifest.json", json.dumps(result.manifest, indent=2) + "\n")
    return paths
