import copy

import numpy as np
import pytest

from curvebench.deep import (
    Adam, TrainConfig, init_lstm, init_transformer, lstm_backward,
    lstm_forward, make_windows, train_deep, transformer_backward,
    transformer_forward,
)
from curvebench.deep.train import Diverged
from curvebench.deep.transformer import positional_encoding


def _numeric_grads(forward, params, Xw, r, keys, step=1e-5, max_entries=40,
                   rng=None):
    """Central finite differences of L = sum(yhat * r) w.r.t. sampled
    parameter entries. Returns {key: [(flat_index, value), ...]}."""
    rng = rng or np.random.default_rng(0)
    out = {}
    for key in keys:
        flat = params[key].ravel()
        idx = np.arange(flat.size)
        if flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        entries = []
        for j in idx:
            orig = flat[j]
            flat[j] = orig + step
            lp = float(np.sum(forward(params, Xw)[0] * r))
            flat[j] = orig - step
            lm = float(np.sum(forward(params, Xw)[0] * r))
            flat[j] = orig
            entries.append((int(j), (lp - lm) / (2 * step)))
        out[key] = entries
    return out


def _max_rel_err(analytic, numeric):
    worst = 0.0
    for key, entries in numeric.items():
        a = analytic[key].ravel()
        for j, num in entries:
            denom = max(abs(num), abs(a[j]), 1e-6)
            worst = max(worst, abs(a[j] - num) / denom)
    return worst


def test_lstm_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    params = init_lstm(3, hidden=4, layers=2, seed=1)
    Xw = rng.standard_normal((2, 5, 3))
    r = rng.standard_normal(2)
    yhat, cache = lstm_forward(params, Xw)
    grads = lstm_backward(params, cache, r)
    numeric = _numeric_grads(lstm_forward, params, Xw, r, list(params), rng=rng)
    assert _max_rel_err(grads, numeric) < 1e-4


def test_transformer_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    params = init_transformer(3, d_model=16, heads=2, blocks=2, d_ff=8, seed=2)
    Xw = rng.standard_normal((2, 5, 3))
    r = rng.standard_normal(2)
    yhat, cache = transformer_forward(params, Xw)
    grads = transformer_backward(params, cache, r)
    grads.pop("_meta", None)
    keys = [k for k in params if k != "_meta"]
    numeric = _numeric_grads(transformer_forward, params, Xw, r, keys, rng=rng)
    assert _max_rel_err(grads, numeric) < 1e-4


# --- building blocks --------------------------------------------------------

def test_positional_encoding_oracle():
    pe = positional_encoding(6, 8)
    assert pe.shape == (6, 8)
    for pos in range(6):
        for i in range(4):
            angle = pos / (10000.0 ** (2 * i / 8))
            assert pe[pos, 2 * i] == pytest.approx(np.sin(angle))
            assert pe[pos, 2 * i + 1] == pytest.approx(np.cos(angle))


def test_make_windows_pads_by_repeating_first_row():
    X = np.arange(10.0).reshape(5, 2)
    w = make_windows(X, np.array([0, 1, 4]), length=3)
    np.testing.assert_array_equal(w[0], np.stack([X[0], X[0], X[0]]))
    np.testing.assert_array_equal(w[1], np.stack([X[0], X[0], X[1]]))
    np.testing.assert_array_equal(w[2], X[2:5])


def test_make_windows_never_reads_future_rows():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 3))
    w = make_windows(X, np.array([7]), length=4)
    X2 = X.copy()
    X2[8:] = 999.0
    w2 = make_windows(X2, np.array([7]), length=4)
    np.testing.assert_array_equal(w, w2)


def test_adam_single_step_oracle():
    opt = Adam(alpha=0.1)
    params = {"w": np.array([1.0, 2.0])}
    grads = {"w": np.array([0.5, -0.5])}
    opt.step(params, grads)
    m = 0.1 * np.array([0.5, -0.5])
    v = 0.001 * np.array([0.25, 0.25])
    mhat = m / (1 - 0.9)
    vhat = v / (1 - 0.999)
    expected = np.array([1.0, 2.0]) - 0.1 * mhat / (np.sqrt(vhat) + 1e-8)
    np.testing.assert_allclose(params["w"], expected, atol=1e-12)


# --- training loop ----------------------------------------------------------

def _linear_task(n=64, d=3, window=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = X[:, 0] * 0.5
    rows = np.arange(n)
    return make_windows(X, rows, window), y


def test_train_deep_reduces_validation_loss():
    Xw, y = _linear_task()
    params = init_lstm(3, hidden=4, layers=1, seed=3)
    result = train_deep("lstm", params, (Xw[:48], y[:48]), (Xw[48:], y[48:]),
                        TrainConfig(max_epochs=30, patience=30, batch_size=16,
                                    alpha=1e-2, seed=3))
    first_valid = result.curve[0][2]
    best_valid = min(c[2] for c in result.curve)
    assert best_valid < first_valid
    assert result.best_epoch >= 1


def test_train_deep_is_deterministic():
    Xw, y = _linear_task()
    out = []
    for _ in range(2):
        params = init_lstm(3, hidden=4, layers=1, seed=4)
        result = train_deep("lstm", params, (Xw[:48], y[:48]),
                            (Xw[48:], y[48:]),
                            TrainConfig(max_epochs=5, patience=5,
                                        batch_size=16, seed=4))
        out.append(result)
    assert out[0].curve == out[1].curve
    for key in out[0].params:
        np.testing.assert_array_equal(out[0].params[key], out[1].params[key])


def test_train_deep_early_stops_on_patience():
    Xw, y = _linear_task()
    rng = np.random.default_rng(5)
    yv = rng.standard_normal(16)  # noise validation: quickly stops improving
    params = init_lstm(3, hidden=4, layers=1, seed=5)
    result = train_deep("lstm", params, (Xw[:48], y[:48]), (Xw[48:], yv),
                        TrainConfig(max_epochs=100, patience=3, batch_size=16,
                                    alpha=1e-2, seed=5))
    assert len(result.curve) < 100
    assert len(result.curve) - result.best_epoch >= 3


def test_train_deep_raises_on_divergence():
    Xw, y = _linear_task()
    params = init_lstm(3, hidden=4, layers=1, seed=6)
    with pytest.raises(Diverged):
        train_deep("lstm", params, (Xw, y * 1e155), (Xw, y),
                   TrainConfig(max_epochs=50, patience=50, alpha=1e3, seed=6))


def test_init_is_seed_deterministic():
    a = init_lstm(5, hidden=8, layers=2, seed=9)
    b = init_lstm(5, hidden=8, layers=2, seed=9)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    c = init_transformer(5, d_model=16, heads=2, blocks=1, d_ff=8, seed=9)
    d = init_transformer(5, d_model=16, heads=2, blocks=1, d_ff=8, seed=9)
    for k in c:
        np.testing.assert_array_equal(c[k], d[k])


def test_lstm_forget_gate_bias_starts_positive():
    params = init_lstm(3, hidden=4, layers=2, seed=0)
    for layer in range(2):
        b = params[f"b{layer}"]
        h = 4
        assert np.all(b[h:2 * h] == 1.0)  # [i, f, g, o] packing
