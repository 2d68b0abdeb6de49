import json
import os

import numpy as np
import pytest

import curvebench.bench as bench
from curvebench.bench import (
    MODEL_IDS, RunConfig, cell_seed, discover_pools, emit_report,
    run_benchmark, run_pool, _prepare_pool)
from curvebench.cli import ENDPOINT_ENV, main

FAST_MODELS = ["random_forest", "qsvm_qnn"]
FAST_PARAMS = {"random_forest": {"n_trees": 8},
               "qsvm_qnn": {"max_train_rows": 24}}


def _fast_config(data_dir, out_dir, **kw):
    return RunConfig(data_dir=data_dir, out_dir=str(out_dir),
                     models=list(FAST_MODELS), seed=5,
                     model_params=dict(FAST_PARAMS), **kw)


# --- seeding and preparation ------------------------------------------------

def test_cell_seed_is_stable_and_distinct():
    assert cell_seed(1, "0xa", "qnn") == cell_seed(1, "0xa", "qnn")
    seeds = {cell_seed(s, p, m) for s in (0, 1) for p in ("0xa", "0xb")
             for m in MODEL_IDS}
    assert len(seeds) == 2 * 2 * len(MODEL_IDS)


def test_discover_pools(small_data_dir):
    assert discover_pools(small_data_dir) == ["0xpool00", "0xpool01", "0xpool02"]


def test_prepare_pool_matrix_hash_is_reproducible(small_data_dir):
    a = _prepare_pool(small_data_dir, "0xpool00", 0.8, 4)
    b = _prepare_pool(small_data_dir, "0xpool00", 0.8, 4)
    assert a[2] == b[2]
    assert a[1] == b[1]
    np.testing.assert_array_equal(a[0].x, b[0].x)


def test_prepare_pool_split_is_chronological(small_data_dir):
    matrix, train_end, _ = _prepare_pool(small_data_dir, "0xpool00", 0.8, 4)
    assert train_end == int(0.8 * matrix.n_rows)
    assert matrix.timestamps[:train_end].max() < matrix.timestamps[train_end:].min()


# --- grid execution ---------------------------------------------------------

def test_run_pool_cell_failure_is_isolated(small_data_dir, monkeypatch):
    def boom(X, y, train_end, seed, hp):
        raise RuntimeError("injected fault")

    config = _fast_config(small_data_dir, "unused")
    baseline = run_pool(config, "0xpool00")

    monkeypatch.setitem(bench._FITTERS, "qsvm_qnn", boom)
    run = run_pool(config, "0xpool00")
    by_model = {c.model_id: c for c in run.cells}
    assert by_model["qsvm_qnn"].report is None
    assert "injected fault" in by_model["qsvm_qnn"].error
    # the healthy cell is untouched, bit for bit
    good = by_model["random_forest"].report
    want = next(c for c in baseline.cells if c.model_id == "random_forest").report
    assert good == want


def test_run_benchmark_aggregates_and_manifests(small_data_dir, tmp_path):
    config = _fast_config(small_data_dir, tmp_path / "out")
    result = run_benchmark(config)
    assert len(result.reports) == 3 * len(FAST_MODELS)
    assert not result.failed_cells
    assert set(result.ranking) == set(FAST_MODELS)
    man = result.manifest
    assert man["config_sha256"] == config.digest()
    assert set(man["pools"]) == {"0xpool00", "0xpool01", "0xpool02"}
    for info in man["pools"].values():
        assert len(info["matrix_sha256"]) == 64
    assert set(man["wall_clock_by_model_s"]) == set(FAST_MODELS)
    assert len(man["cells"]) == 3 * len(FAST_MODELS)


def test_rerun_same_seed_identical_aggregate_bytes(small_data_dir, tmp_path):
    texts = []
    for run_dir in ("a", "b"):
        config = _fast_config(small_data_dir, tmp_path / run_dir)
        paths = emit_report(run_benchmark(config))
        texts.append({name: open(p, "rb").read()
                      for name, p in paths.items() if name != "manifest.json"})
    assert texts[0] == texts[1]


def test_emit_report_files(small_data_dir, tmp_path):
    config = _fast_config(small_data_dir, tmp_path / "out", pools=["0xpool01"])
    paths = emit_report(run_benchmark(config))
    assert set(paths) == {"pool_reports.csv", "aggregate.csv", "report.md",
                          "manifest.json"}
    md = open(paths["report.md"], encoding="utf-8").read()
    assert md.startswith("| Model | Test MAE | Test RMSE | Dir. Acc. |")
    assert "Random Forest" in md
    man = json.load(open(paths["manifest.json"], encoding="utf-8"))
    assert man["feature_space"]["collapsed_lag_hours"] == [1, 6]


def test_run_config_json_round_trip(tmp_path):
    config = RunConfig(data_dir="d", out_dir="o", seed=3,
                       models=["random_forest"], workers=2)
    path = tmp_path / "config.json"
    path.write_text(config.canonical())
    clone = RunConfig.from_json(str(path))
    assert clone == config
    assert clone.digest() == config.digest()


# --- CLI --------------------------------------------------------------------

def test_cli_synth_writes_deterministic_files(tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["synth", "--out", str(out1), "--pools", "2",
                 "--rows", "120", "--seed", "3"]) == 0
    assert main(["synth", "--out", str(out2), "--pools", "2",
                 "--rows", "120", "--seed", "3"]) == 0
    for name in os.listdir(out1):
        a = (out1 / name).read_bytes()
        b = (out2 / name).read_bytes()
        assert a == b


def test_cli_synth_rejects_tiny_series(tmp_path):
    with pytest.raises(ValueError):
        main(["synth", "--out", str(tmp_path / "x"), "--rows", "116"])


def test_cli_run_and_report(small_data_dir, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--data", small_data_dir, "--out", str(out),
                 "--seed", "5", "--models", ",".join(FAST_MODELS),
                 "--pools", "0xpool00,0xpool02"])
    assert code == 0
    assert (out / "report.md").exists()
    printed = capsys.readouterr().out
    assert "| Model | Test MAE |" in printed

    redo = tmp_path / "redo"
    assert main(["report", "--results", str(out / "pool_reports.csv"),
                 "--out", str(redo)]) == 0
    assert (redo / "aggregate.csv").read_bytes() == (out / "aggregate.csv").read_bytes()
    assert (redo / "report.md").read_bytes() == (out / "report.md").read_bytes()


def test_cli_run_exit_code_reflects_cell_failures(small_data_dir, tmp_path,
                                                  monkeypatch, capsys):
    def boom(X, y, train_end, seed, hp):
        raise RuntimeError("injected fault")

    monkeypatch.setitem(bench._FITTERS, "qsvm_qnn", boom)
    code = main(["run", "--data", small_data_dir,
                 "--out", str(tmp_path / "out"), "--seed", "5",
                 "--models", ",".join(FAST_MODELS), "--pools", "0xpool00"])
    assert code == 1
    assert "injected fault" in capsys.readouterr().err


def test_cli_unknown_model_rejected(small_data_dir, tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--data", small_data_dir, "--out", str(tmp_path / "o"),
              "--models", "perceptron"])


def test_cli_fetch_requires_endpoint(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(ENDPOINT_ENV, raising=False)
    code = main(["fetch", "--pools", "0xabc", "--from", "0", "--to", "1",
                 "--out", str(tmp_path / "fx")])
    assert code == 2
    assert ENDPOINT_ENV in capsys.readouterr().err


def test_cli_endpoint_env_override(small_data_dir, tmp_path, monkeypatch):
    captured = {}
    real = bench.run_benchmark

    def spy(config):
        captured["endpoint"] = config.endpoint
        return real(config)

    monkeypatch.setenv(ENDPOINT_ENV, "https://example.invalid/api")
    import curvebench.cli as cli
    monkeypatch.setattr(cli, "run_benchmark", spy)
    main(["run", "--data", small_data_dir, "--out", str(tmp_path / "out"),
          "--seed", "5", "--models", "qsvm_qnn", "--pools", "0xpool00"])
    assert captured["endpoint"] == "https://example.invalid/api"
