"""Stacked LSTM regressor with exact reverse-mode gradients.

Gate weights are packed column-wise as [input, forget, candidate, output]
into single (in_dim, 4h) / (h, 4h) matrices per layer. All math is double
precision so finite-difference checks are meaningful.
"""
from __future__ import annotations

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_lstm(d: int, hidden: int = 64, layers: int = 2, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan_in)) init; forget-gate bias starts at +1."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    in_dim = d
    for l in range(layers):
        sw = 1.0 / np.sqrt(in_dim)
        su = 1.0 / np.sqrt(hidden)
        params[f"W{l}"] = rng.uniform(-sw, sw, (in_dim, 4 * hidden))
        params[f"U{l}"] = rng.uniform(-su, su, (hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        params[f"b{l}"] = b
        in_dim = hidden
    sh = 1.0 / np.sqrt(hidden)
    params["W_fc"] = rng.uniform(-sh, sh, hidden)
    params["b_fc"] = np.zeros(1)
    return params


def _layer_count(params) -> int:
    return sum(1 for k in params if k.startswith("W") and k[1:].isdigit())


def lstm_forward(params: dict[str, np.ndarray], X: np.ndarray):
    """Run the stacked cells over a (B, L, d) batch of windows.

    Returns (yhat of shape (B,), cache for backward). Initial hidden and
    cell states are zero.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    B, L, _ = X.shape
    layers = _layer_count(params)
    hidden = params["U0"].shape[0]
    cache = {"X": X, "layers": layers, "hidden": hidden, "steps": []}
    inputs = X
    for l in range(layers):
        W, U, b = params[f"W{l}"], params[f"U{l}"], params[f"b{l}"]
        h = np.zeros((B, hidden))
        c = np.zeros((B, hidden))
        hs = np.empty((B, L, hidden))
        steps = []
        for t in range(L):
            z = inputs[:, t] @ W + h @ U + b
            i = _sigmoid(z[:, :hidden])
            f = _sigmoid(z[:, hidden:2 * hidden])
            g = np.tanh(z[:, 2 * hidden:3 * hidden])
            o = _sigmoid(z[:, 3 * hidden:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            steps.append((inputs[:, t], h, c, i, f, g, o, tc))
            h, c = h_new, c_new
            hs[:, t] = h
        cache["steps"].append(steps)
        cache.setdefault("hs", []).append(hs)
        inputs = hs
    yhat = inputs[:, -1] @ params["W_fc"] + params["b_fc"][0]
    cache["h_last"] = inputs[:, -1]
    return yhat, cache


def lstm_backward(params: dict[str, np.ndarray], cache: dict, dy: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of sum(dy * yhat) w.r.t. every parameter."""
    dy = np.asarray(dy, dtype=np.float64)
    B = dy.shape[0]
    layers = cache["layers"]
    hidden = cache["hidden"]
    L = cache["X"].shape[1]

    grads = {"W_fc": cache["h_last"].T @ dy, "b_fc": np.array([dy.sum()])}
    # Gradient arriving at each layer's output sequence, top layer first.
    dh_seq = np.zeros((B, L, hidden))
    dh_seq[:, -1] = dy[:, None] * params["W_fc"][None, :]

    for l in range(layers - 1, -1, -1):
        W, U = params[f"W{l}"], params[f"U{l}"]
        steps = cache["steps"][l]
        in_dim = W.shape[0]
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros(4 * hidden)
        dX = np.zeros((B, L, in_dim))
        dh_next = np.zeros((B, hidden))
        dc_next = np.zeros((B, hidden))
        for t in range(L - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, tc = steps[t]
            dh = dh_seq[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dW += x_t.T @ dz
            dU += h_prev.T @ dz
            db += dz.sum(axis=0)
            dX[:, t] = dz @ W.T
            dh_next = dz @ U.T
        grads[f"W{l}"] = dW
        grads[f"U{l}"] = dU
        grads[f"b{l}"] = db
        dh_seq = dX if l > 0 else dh_seq  # pass gradient down to layer l-1
    return grads
