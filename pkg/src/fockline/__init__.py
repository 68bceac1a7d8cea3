"""Tensor-train DMRG for second-quantized electronic Hamiltonians.

The package also carries an exact-diagonalization reference solver and a
small antisymmetric neural ansatz (SimplexNet) for a toy eigenproblem.
"""
from .dmrg import DmrgConfig, DmrgResult, ground_state, run_dmrg
from .fcidump import MolecularIntegrals, parse_fcidump, read_fcidump, write_fcidump
from .oracle import dense_from_strings, sector_ground_state, sector_operator
from .second_quantization import (
    FockProblem,
    annihilation_string,
    build_hamiltonian,
    creation_string,
    hamiltonian_strings,
    number_operator,
)
from .tensor_train import TensorTrain, inner_product, tt_round
from .tto import OperatorString, TensorTrainOperator, apply, tto_from_strings

__version__ = "0.1.0"

__all__ = [
    "DmrgConfig",
    "DmrgResult",
    "FockProblem",
    "MolecularIntegrals",
    "OperatorString",
    "TensorTrain",
    "TensorTrainOperator",
    "annihilation_string",
    "apply",
    "build_hamiltonian",
    "creation_string",
    "dense_from_strings",
    "ground_state",
    "hamiltonian_strings",
    "inner_product",
    "number_operator",
    "parse_fcidump",
    "read_fcidump",
    "run_dmrg",
    "sector_ground_state",
    "sector_operator",
    "tt_round",
    "tto_from_strings",
    "write_fcidump",
]
