"""Sparse Hamiltonian of the ensemble (optionally plus remote qubit).

In the truncated occupation basis, with S the set of excited spins:

* diagonal    ``sum_{i in S} delta_i + sum_{i<j in S} V0_ij``
* flip-flop   ``<S - {i} + {j}| H |S> = -V0_ij``
* transverse  ``<S + {i}| H |S> = omega`` (ensemble spins only by default)

The constant ``-N*delta/2`` that the Pauli form carries is dropped, so the
all-ground configuration sits at energy 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import SpinGeometry, build_couplings
from .hilbert import DEFAULT_DIMENSION_CAP, SparseOperator, TruncatedBasis, build_basis
from .units import PhysicalParams


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    geometry: SpinGeometry
    params: PhysicalParams
    m_max: int = 2
    include_qubit: bool = False
    qubit_delta: float | None = None
    apply_transverse_to_qubit: bool = False
    # False: the qubit has its own excitation budget and m_max limits ensemble spins only
    qubit_in_budget: bool = False
    dimension_cap: int = DEFAULT_DIMENSION_CAP

    def __post_init__(self):
        if self.include_qubit:
            if self.geometry.qubit_position is None:
                raise ValueError("include_qubit requires geometry.qubit_position")
            if self.qubit_delta is None:
                raise ValueError("include_qubit requires qubit_delta")

    @property
    def n_spins(self) -> int:
        return self.geometry.n + (1 if self.include_qubit else 0)

    def basis(self) -> TruncatedBasis:
        free = 1 if (self.include_qubit and not self.qubit_in_budget) else 0
        return build_basis(self.n_spins, self.m_max, free_spins=free,
                           dimension_cap=self.dimension_cap)


def full_coupling_matrix(spec: HamiltonianSpec) -> np.ndarray:
    c = build_couplings(spec.geometry, spec.params)
    if not spec.include_qubit:
        return np.array(c.v0)
    n = spec.geometry.n
    v = np.zeros((n + 1, n + 1))
    v[:n, :n] = c.v0
    v[:n, n] = c.v_qubit
    v[n, :n] = c.v_qubit
    return v


def hamiltonian_terms(spec: HamiltonianSpec, basis: TruncatedBasis | None = None):
    """Return ``(H0, X)`` with ``H = H0 + omega * X``.

    ``H0`` holds splittings and dipolar terms; ``X`` is the sum of sigma_x over
    the driven spins.  Splitting them lets omega sweeps reuse one assembly.
    """
    basis = basis or spec.basis()
    v = full_coupling_matrix(spec)
    n_ens = spec.geometry.n
    splittings = np.full(spec.n_spins, spec.params.delta)
    if spec.include_qubit:
        splittings[n_ens] = spec.qubit_delta
    dim = basis.dimension
    occ = basis.occupation.astype(float)
    diag = occ @ splittings + 0.5 * np.einsum("ai,ai->a", occ @ v, occ)

    # flip-flop: de-excite i, excite j != i
    lower = basis.lower_table
    raise_ = basis.raise_table
    a_idx, i_idx = np.nonzero(lower >= 0)
    b_idx = lower[a_idx, i_idx]
    targets = raise_[b_idx]  # (pairs, n_spins)
    k, j_idx = np.nonzero(targets >= 0)
    keep = j_idx != i_idx[k]
    k, j_idx = k[keep], j_idx[keep]
    rows = targets[k, j_idx]
    cols = a_idx[k]
    vals = -v[i_idx[k], j_idx]
    nz = vals != 0
    hop = sp.csr_matrix((vals[nz], (rows[nz], cols[nz])), shape=(dim, dim))
    h0 = (sp.diags(diag, format="csr") + hop).tocsr()

    driven = list(range(n_ens))
    if spec.include_qubit and spec.apply_transverse_to_qubit:
        driven.append(n_ens)
    up = raise_[:, driven]
    r, c = np.nonzero(up >= 0)
    tgt = up[r, c]
    ones = np.ones(len(r))
    x = sp.csr_matrix(
        (np.concatenate([ones, ones]), (np.concatenate([tgt, r]), np.concatenate([r, tgt]))),
        shape=(dim, dim),
    )
    return SparseOperator(basis, h0), SparseOperator(basis, x)


def build_hamiltonian(spec: HamiltonianSpec, basis: TruncatedBasis | None = None) -> SparseOperator:
    h0, x = hamiltonian_terms(spec, basis)
    if spec.params.omega == 0:
        return h0
    return h0 + x.scaled(spec.params.omega)


def effective_coupling_prediction(n_c: float, distance: float, params: PhysicalParams,
                                  angular: float = 1.0) -> float:
    """sqrt(N_c) * j_dd * angular / R^3 in MHz."""
    if n_c < 1 or distance <= 0:
        raise ValueError("need n_c >= 1 and distance > 0")
    return float(np.sqrt(n_c) * params.j_dd * angular / distance**3)
