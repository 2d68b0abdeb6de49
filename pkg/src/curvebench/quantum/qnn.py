"""Variational QNN regressor: RY-encoded inputs, 4-layer variational
circuit, Z-expectation readout through a trainable affine head, trained
with Adam on parameter-shift gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..deep.optim import Adam
from .simulator import N_LAYERS, N_QUBITS, apply_variational, encode_state, expectation_z


class Diverged(Exception):
    pass


@dataclass
class QnnParams:
    theta: np.ndarray  # (layers, qubits, 2) RY/RZ angles
    w: float           # head scale
    b: float           # head bias

    def copy(self) -> "QnnParams":
        return QnnParams(self.theta.copy(), self.w, self.b)


@dataclass
class QnnTrainConfig:
    epochs: int = 100
    patience: int = 10
    alpha: float = 0.05
    seed: int = 0


def init_qnn(seed: int = 0, y_mean: float = 0.0) -> QnnParams:
    # Small-angle start mitigates flat-gradient initializations; the head
    # bias starts at the target mean so w/theta only model deviations.
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-0.1, 0.1, (N_LAYERS, N_QUBITS, 2))
    return QnnParams(theta=theta, w=0.1, b=float(y_mean))


def qnn_expectation(angles: np.ndarray, theta: np.ndarray) -> float:
    """<Z_0> of the encoded-then-variational state for one input."""
    state = encode_state(angles)
    apply_variational(state, theta)
    return expectation_z(state, 0)


def qnn_predict(angles: np.ndarray, params: QnnParams) -> float:
    return params.w * qnn_expectation(angles, params.theta) + params.b


def parameter_shift_grad(angles: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """d<Z_0>/d(theta_j) via +-pi/2 shifted circuit evaluations."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    flat = theta.ravel()
    gflat = grad.ravel()
    shifted = theta.copy()
    sflat = shifted.ravel()
    for j in range(flat.size):
        sflat[j] = flat[j] + np.pi / 2
        plus = qnn_expectation(angles, shifted)
        sflat[j] = flat[j] - np.pi / 2
        minus = qnn_expectation(angles, shifted)
        sflat[j] = flat[j]
        gflat[j] = 0.5 * (plus - minus)
    return grad


@dataclass
class QnnTrainResult:
    params: QnnParams
    best_epoch: int
    curve: list = field(default_factory=list)


def train_qnn(
    A: np.ndarray,
    y: np.ndarray,
    A_val: np.ndarray,
    y_val: np.ndarray,
    config: QnnTrainConfig = QnnTrainConfig(),
) -> QnnTrainResult:
    """Full-batch MSE training over pre-compressed angle rows ``A``.

    Each epoch runs one Adam step on parameter-shift circuit gradients plus
    analytic head gradients; early stopping mirrors the deep trainer.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    params = init_qnn(seed=config.seed, y_mean=float(y.mean()) if len(y) else 0.0)
    named = {"theta": params.theta,
             "w": np.array([params.w]), "b": np.array([params.b])}
    opt = Adam(alpha=config.alpha)
    best = params.copy()
    best_epoch = 0
    best_valid = np.inf
    since_best = 0
    curve = []
    m = len(y)

    for epoch in range(1, config.epochs + 1):
        exps = np.array([qnn_expectation(a, named["theta"]) for a in A])
        preds = named["w"][0] * exps + named["b"][0]
        err = preds - y
        loss = float(np.mean(err * err))
        if not np.isfinite(loss):
            raise Diverged(f"non-finite loss at epoch {epoch}")

        gtheta = np.zeros_like(named["theta"])
        for a, e in zip(A, err):
            gtheta += (2.0 * e * named["w"][0] / m) * parameter_shift_grad(a, named["theta"])
        grads = {
            "theta": gtheta,
            "w": np.array([float(np.mean(2.0 * err * exps))]),
            "b": np.array([float(np.mean(2.0 * err))]),
        }
        opt.step(named, grads)

        if len(y_val):
            vexp = np.array([qnn_expectation(a, named["theta"]) for a in A_val])
            valid_loss = float(np.mean((named["w"][0] * vexp + named["b"][0] - y_val) ** 2))
        else:
            valid_loss = loss
        curve.append((epoch, loss, valid_loss))

        if valid_loss < best_valid:
            best_valid = valid_loss
            best = QnnParams(named["theta"].copy(), float(named["w"][0]), float(named["b"][0]))
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    return QnnTrainResult(params=best, best_epoch=best_epoch, curve=curve)
