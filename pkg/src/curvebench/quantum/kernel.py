"""Fidelity quantum kernel and a centered ridge-style kernel regressor.

The kernel is the squared overlap of the two RY-encoded states; the
regressor solves (K + lambda I) alpha = y - mean(y) over the support rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simulator import encode_state


class SingularSystem(Exception):
    pass


@dataclass
class KernelModel:
    support_angles: np.ndarray  # (m, 4)
    alpha: np.ndarray           # (m,)
    bias: float
    ridge: float
    gram: np.ndarray            # (m, m)


def _encoded_states(A: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return np.stack([encode_state(a).amplitudes for a in A])


def quantum_kernel(a1: np.ndarray, a2: np.ndarray) -> float:
    """|<psi(a1)|psi(a2)>|^2 in [0, 1] for two angle vectors."""
    s1 = encode_state(a1).amplitudes
    s2 = encode_state(a2).amplitudes
    return float(np.abs(np.vdot(s1, s2)) ** 2)


def gram_matrix(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Pairwise kernel values; symmetric with unit diagonal when B is None."""
    sa = _encoded_states(A)
    sb = sa if B is None else _encoded_states(B)
    return np.abs(sa.conj() @ sb.T) ** 2


def fit_kernel_regressor(A: np.ndarray, y: np.ndarray, ridge: float = 1e-3) -> KernelModel:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    K = gram_matrix(A)
    bias = float(y.mean())
    system = K + ridge * np.eye(len(y))
    try:
        alpha = np.linalg.solve(system, y - bias)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(alpha)):
        raise SingularSystem("non-finite solution; Gram matrix is rank-deficient")
    return KernelModel(support_angles=A, alpha=alpha, bias=bias, ridge=ridge, gram=K)


def kernel_predict(model: KernelModel, A: np.ndarray) -> np.ndarray:
    """f(x) = sum_i alpha_i K(x, x_i) + b for each angle row."""
    K = gram_matrix(np.atleast_2d(np.asarray(A, dtype=np.float64)), model.support_angles)
    return K @ model.alpha + model.bias


def export_gram_csv(model: KernelModel, path: str) -> None:
    np.savetxt(path, model.gram, delimiter=",")
