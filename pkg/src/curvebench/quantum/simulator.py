"""Dense statevector simulator for the 4-qubit circuits.

Qubit q maps to bit q of the amplitude index (little-endian). The circuit
family is fixed: RY angle encoding, then variational layers of RY/RZ
rotations followed by a CNOT ring 0->1->2->3->0.
"""
from __future__ import annotations

import json
import math

import numpy as np

N_QUBITS = 4
DIM = 2 ** N_QUBITS
N_LAYERS = 4

# When true, every gate application verifies the state norm to 1e-10.
debug_norm_checks = False

_Z_SIGNS = {
    q: 1.0 - 2.0 * ((np.arange(DIM) >> q) & 1)
    for q in range(N_QUBITS)
}

# Per-qubit partner indices: _PAIRS[q] = (indices with bit q clear, set).
_PAIRS = {}
for _q in range(N_QUBITS):
    _i = np.arange(DIM)
    _lo = _i[(_i >> _q) & 1 == 0]
    _PAIRS[_q] = (_lo, _lo | (1 << _q))

_CNOT_SWAPS = {}
for _c in range(N_QUBITS):
    for _t in range(N_QUBITS):
        if _c == _t:
            continue
        idx = np.arange(DIM)
        sel = ((idx >> _c) & 1 == 1) & ((idx >> _t) & 1 == 0)
        _CNOT_SWAPS[(_c, _t)] = (idx[sel], idx[sel] | (1 << _t))

CNOT_RING = tuple((q, (q + 1) % N_QUBITS) for q in range(N_QUBITS))


class NormViolation(Exception):
    pass


class Statevector:
    """Amplitudes of one n=4 pure state; gates mutate in place."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes: np.ndarray | None = None):
        if amplitudes is None:
            amplitudes = np.zeros(DIM, dtype=np.complex128)
            amplitudes[0] = 1.0
        else:
            amplitudes = np.asarray(amplitudes, dtype=np.complex128)
            if amplitudes.shape != (DIM,):
                raise ValueError(f"expected {DIM} amplitudes")
        self.amplitudes = amplitudes

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def _checked(self):
        if debug_norm_checks and abs(self.norm() - 1.0) > 1e-10:
            raise NormViolation(f"norm drifted to {self.norm()}")
        return self

    def apply_ry(self, qubit: int, theta: float) -> "Statevector":
        c = math.cos(theta / 2.0)
        s = math.sin(theta / 2.0)
        lo, hi = _PAIRS[qubit]
        a = self.amplitudes
        a0 = a[lo]
        a1 = a[hi]
        a[lo] = c * a0 - s * a1
        a[hi] = s * a0 + c * a1
        return self._checked()

    def apply_rz(self, qubit: int, theta: float) -> "Statevector":
        lo, hi = _PAIRS[qubit]
        a = self.amplitudes
        a[lo] *= complex(math.cos(theta / 2.0), -math.sin(theta / 2.0))
        a[hi] *= complex(math.cos(theta / 2.0), math.sin(theta / 2.0))
        return self._checked()

    def apply_cnot(self, control: int, target: int) -> "Statevector":
        i0, i1 = _CNOT_SWAPS[(control, target)]
        a = self.amplitudes
        a[i0], a[i1] = a[i1].copy(), a[i0].copy()
        return self._checked()

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy())


def compress_features(x: np.ndarray) -> np.ndarray:
    """Map a standardized d-vector to 4 encoding angles in (-pi, pi).

    Columns split into 4 contiguous blocks; each block mean passes through
    pi*tanh to bound the rotation.
    """
    x = np.asarray(x, dtype=np.float64)
    blocks = np.array_split(x, N_QUBITS, axis=-1)
    means = np.stack([b.mean(axis=-1) for b in blocks], axis=-1)
    return np.pi * np.tanh(means)


def encode_state(angles) -> Statevector:
    """RY(angle_q) on each qubit of the all-zero state."""
    state = Statevector()
    for q in range(N_QUBITS):
        state.apply_ry(q, float(angles[q]))
    return state


def apply_variational(state: Statevector, theta: np.ndarray) -> Statevector:
    """Per layer: RY then RZ on every qubit, then the CNOT ring."""
    theta = np.asarray(theta, dtype=np.float64)
    for layer in range(theta.shape[0]):
        for q in range(N_QUBITS):
            state.apply_ry(q, theta[layer, q, 0])
        for q in range(N_QUBITS):
            state.apply_rz(q, theta[layer, q, 1])
        for c, t in CNOT_RING:
            state.apply_cnot(c, t)
    return state


def expectation_z(state: Statevector, qubit: int) -> float:
    """<psi| Z_q |psi> as a parity-signed probability sum."""
    return float(np.sum(_Z_SIGNS[qubit] * np.abs(state.amplitudes) ** 2))


def circuit_gates(angles, theta) -> list[dict]:
    """Layered gate list (audit dump; JSON-serializable)."""
    gates = [{"gate": "ry", "qubit": q, "angle": float(angles[q])}
             for q in range(N_QUBITS)]
    theta = np.asarray(theta, dtype=np.float64)
    for layer in range(theta.shape[0]):
        for q in range(N_QUBITS):
            gates.append({"gate": "ry", "qubit": q, "angle": float(theta[layer, q, 0])})
        for q in range(N_QUBITS):
            gates.append({"gate": "rz", "qubit": q, "angle": float(theta[layer, q, 1])})
        for c, t in CNOT_RING:
            gates.append({"gate": "cnot", "control": c, "target": t})
    return gates


def dump_circuit(angles, theta, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(circuit_gates(angles, theta), fh, indent=2)
