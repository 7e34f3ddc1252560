"""Disordered dipolar NV-spin ensembles: collective eigenmodes, qubit coupling
and gate-error budgets."""

__version__ = "0.1.0"

from .units import PhysicalParams, default_nv_params, perturbative_j, check_hierarchy
from .geometry import SpinGeometry, CouplingMatrix, sample_ensemble, build_couplings, place_qubit
from .hilbert import TruncatedBasis, SparseOperator, StateVector, build_basis, w_state
from .hamiltonian import HamiltonianSpec, build_hamiltonian
from .spectrum import diagonalize, collective_mode_energy, sweep_omega, truncation_check
from .dynamics import evolve, rabi_experiment, sweep_distance, tune_qubit_resonance

__all__ = [
    "PhysicalParams",
    "default_nv_params",
    "perturbative_j",
    "check_hierarchy",
    "SpinGeometry",
    "CouplingMatrix",
    "sample_ensemble",
    "build_couplings",
    "place_qubit",
    "TruncatedBasis",
    "SparseOperator",
    "StateVector",
    "build_basis",
    "w_state",
    "HamiltonianSpec",
    "build_hamiltonian",
    "diagonalize",
    "collective_mode_energy",
    "sweep_omega",
    "truncation_check",
    "evolve",
    "rabi_experiment",
    "sweep_distance",
    "tune_qubit_resonance",
]
