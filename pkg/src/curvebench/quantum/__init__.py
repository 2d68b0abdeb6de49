from .simulator import (
    N_QUBITS, Statevector, encode_state, apply_variational, expectation_z,
    compress_features, circuit_gates,
)
from .qnn import QnnParams, qnn_expectation, qnn_predict, parameter_shift_grad, train_qnn
from .kernel import quantum_kernel, gram_matrix, fit_kernel_regressor, kernel_predict, KernelModel

__all__ = [
    "N_QUBITS", "Statevector", "encode_state", "apply_variational",
    "expectation_z", "compress_features", "circuit_gates",
    "QnnParams", "qnn_expectation", "qnn_predict", "parameter_shift_grad", "train_qnn",
    "quantum_kernel", "gram_matrix", "fit_kernel_regressor", "kernel_predict", "KernelModel",
]
