"""Shared training loop for the deep regressors: mini-batch MSE with Adam,
chronological validation, and patience-based early stopping."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .lstm import lstm_backward, lstm_forward
from .optim import Adam
from .transformer import transformer_backward, transformer_forward

WINDOW_STEPS = 28  # 7 days at 6-hour cadence


class Diverged(Exception):
    pass


@dataclass
class TrainConfig:
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    alpha: float = 1e-3
    seed: int = 0


@dataclass
class TrainResult:
    params: dict
    best_epoch: int
    curve: list = field(default_factory=list)  # (epoch, train_loss, valid_loss)


_FORWARD = {"lstm": lstm_forward, "transformer": transformer_forward}
_BACKWARD = {"lstm": lstm_backward, "transformer": transformer_backward}


def make_windows(X: np.ndarray, rows: np.ndarray, length: int = WINDOW_STEPS) -> np.ndarray:
    """Trailing windows of feature rows ending at each requested row.

    Rows too close to the start are left-padded by repeating the first row;
    windows never read past their end row.
    """
    X = np.asarray(X, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    out = np.empty((len(rows), length, X.shape[1]))
    for i, t in enumerate(rows):
        lo = t - length + 1
        if lo >= 0:
            out[i] = X[lo:t + 1]
        else:
            pad = np.repeat(X[0:1], -lo, axis=0)
            out[i] = np.vstack([pad, X[:t + 1]])
    return out


def _batched_predict(kind, params, Xw, batch_size=256):
    preds = np.empty(len(Xw))
    fwd = _FORWARD[kind]
    for s in range(0, len(Xw), batch_size):
        preds[s:s + batch_size] = fwd(params, Xw[s:s + batch_size])[0]
    return preds


def train_deep(
    model_kind: str,
    params: dict,
    train: tuple[np.ndarray, np.ndarray],
    valid: tuple[np.ndarray, np.ndarray],
    config: TrainConfig = TrainConfig(),
) -> TrainResult:
    """Train in place and return the best-validation-epoch parameters.

    Stops after ``patience`` epochs without a validation-loss improvement or
    at ``max_epochs``; raises :class:`Diverged` on a non-finite loss.
    """
    Xw, y = train
    Xv, yv = valid
    fwd, bwd = _FORWARD[model_kind], _BACKWARD[model_kind]
    rng = np.random.default_rng(config.seed)
    opt = Adam(alpha=config.alpha)
    best = copy.deepcopy(params)
    best_epoch = 0
    best_valid = np.inf if len(yv) else None
    curve = []
    since_best = 0
    n = len(y)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            yhat, cache = fwd(params, Xw[idx])
            err = yhat - y[idx]
            loss = float(np.mean(err * err))
            if not np.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            total += loss * len(idx)
            grads = bwd(params, cache, 2.0 * err / len(idx))
            grads.pop("_meta", None)
            opt.step(params, grads)
        train_loss = total / n

        if len(yv):
            vp = _batched_predict(model_kind, params, Xv)
            valid_loss = float(np.mean((vp - yv) ** 2))
        else:
            valid_loss = train_loss
        curve.append((epoch, train_loss, valid_loss))

        if best_valid is None or valid_loss < best_valid:
            best_valid = valid_loss
            best = copy.deepcopy(params)
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    return TrainResult(params=best, best_epoch=best_epoch, curve=curve)
