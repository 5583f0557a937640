"""Sample-based neural diagonalization for quantum Ising ground states."""


def _tune_allocator() -> None:
    # Large temporary arrays otherwise trigger an mmap/munmap (page-fault)
    # round trip per allocation, which dominates runtime on some kernels.
    # Keeping big blocks on the heap makes numpy temporaries cheap.
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except Exception:
        pass


_tune_allocator()

from .paulis import (
    BasisTransform,
    PauliString,
    PauliSum,
    RotationGate,
    conjugate_gate,
    conjugate_transform,
    d_conjugate_transform,
    dense_matrix,
    merge_and_prune,
    pack_bits,
    string_apply,
    unpack_bits,
)
from .ising import (
    ExactSolution,
    LatticeSpec,
    build_hamiltonian,
    exact_diag,
    ground_state_sample,
    jw_energy_1d,
    lattice_bonds,
)
from .subspace import (
    ConfigSet,
    SubspaceResult,
    full_basis,
    lowest_eigenpair,
    relative_error,
    sbd_energy,
    subspace_matrix,
)
from .sampler import (
    ArModel,
    TrainConfig,
    UniqueSamples,
    snd_gradient,
    train_snd,
)
from .absnd import (
    TransformSpec,
    VonMisesNet,
    absnd_gradient,
    hf_angle_gradient,
    optimize_rotations,
    sample_angles,
    train_absnd,
    vonmises_gradients,
)
from .qcircuit import (
    Circuit,
    ansatz_sec4,
    expval,
    offdiag_element,
    param_shift_grad,
    subspace_matrix_circuit,
)
from .estimators import ABSNDSolver, EnergyEstimate, ExactSampleSBD, SNDSolver

__version__ = "0.1.0"

__all__ = [
    "ABSNDSolver",
    "ArModel",
    "BasisTransform",
    "Circuit",
    "ConfigSet",
    "EnergyEstimate",
    "ExactSampleSBD",
    "ExactSolution",
    "LatticeSpec",
    "PauliString",
    "PauliSum",
    "RotationGate",
    "SNDSolver",
    "SubspaceResult",
    "TrainConfig",
    "TransformSpec",
    "UniqueSamples",
    "VonMisesNet",
    "absnd_gradient",
    "ansatz_sec4",
    "build_hamiltonian",
    "conjugate_gate",
    "conjugate_transform",
    "d_conjugate_transform",
    "dense_matrix",
    "exact_diag",
    "expval",
    "full_basis",
    "ground_state_sample",
    "hf_angle_gradient",
    "jw_energy_1d",
    "lattice_bonds",
    "lowest_eigenpair",
    "merge_and_prune",
    "offdiag_element",
    "optimize_rotations",
    "pack_bits",
    "param_shift_grad",
    "relative_error",
    "sample_angles",
    "sbd_energy",
    "snd_gradient",
    "string_apply",
    "subspace_matrix",
    "subspace_matrix_circuit",
    "train_absnd",
    "train_snd",
    "unpack_bits",
    "vonmises_gradients",
]
