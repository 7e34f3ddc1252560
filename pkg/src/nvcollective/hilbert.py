"""Excitation-number truncated basis over two-level spins.

A basis state is labelled by the sorted tuple of excited spin indices
(m_s = 1, sigma_z = +1).  States are ordered by excitation count, then
lexicographically, and only configurations with at most ``m_max`` excited
*truncated* spins are kept.  The last ``free_spins`` spins (the remote qubit)
are exempt from the truncation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp

DEFAULT_DIMENSION_CAP = 200_000


class DimensionCapError(ValueError):
    """Requested basis would exceed the configured dimension cap."""


def predicted_dimension(n_spins: int, m_max: int, free_spins: int = 0) -> int:
    n_t = n_spins - free_spins
    return sum(comb(n_t, k) for k in range(min(m_max, n_t) + 1)) * 2**free_spins


class TruncatedBasis:
    def __init__(self, n_spins: int, m_max: int, free_spins: int = 0,
                 dimension_cap: int = DEFAULT_DIMENSION_CAP):
        if not 0 <= free_spins <= n_spins:
            raise ValueError("free_spins must lie in [0, n_spins]")
        if not 0 <= m_max <= n_spins - free_spins:
            raise ValueError(f"m_max must lie in [0, {n_spins - free_spins}]")
        dim = predicted_dimension(n_spins, m_max, free_spins)
        if dim > dimension_cap:
            raise DimensionCapError(
                f"dimension {dim} for n={n_spins}, m_max={m_max} exceeds cap {dimension_cap}"
            )
        self.n_spins = n_spins
        self.m_max = m_max
        self.free_spins = free_spins
        n_t = n_spins - free_spins
        free = range(n_t, n_spins)
        states = []
        for a in range(m_max + 1):
            for core in itertools.combinations(range(n_t), a):
                for b in range(free_spins + 1):
                    for extra in itertools.combinations(free, b):
                        states.append(core + extra)
        states.sort(key=lambda s: (len(s), s))
        self.states: list[tuple[int, ...]] = states
        self.index: dict[tuple[int, ...], int] = {s: i for i, s in enumerate(states)}

    @property
    def dimension(self) -> int:
        return len(self.states)

    @property
    def n_truncated(self) -> int:
        return self.n_spins - self.free_spins

    def __len__(self):
        return len(self.states)

    def __repr__(self):
        return (f"TruncatedBasis(n_spins={self.n_spins}, m_max={self.m_max}, "
                f"free_spins={self.free_spins}, dimension={self.dimension})")

    def allowed(self, state: tuple[int, ...]) -> bool:
        return sum(1 for i in state if i < self.n_truncated) <= self.m_max

    @cached_property
    def occupation(self) -> np.ndarray:
        """Boolean (dimension, n_spins) matrix of excitations."""
        occ = np.zeros((self.dimension, self.n_spins), dtype=bool)
        for a, s in enumerate(self.states):
            occ[a, list(s)] = True
        occ.setflags(write=False)
        return occ

    @cached_property
    def counts(self) -> np.ndarray:
        """Number of excited truncated spins per state (the manifold m)."""
        c = self.occupation[:, : self.n_truncated].sum(axis=1)
        c.setflags(write=False)
        return c

    @cached_property
    def raise_table(self) -> np.ndarray:
        """``raise_table[a, i]`` = index of state a with spin i excited, -1 if
        spin i is already excited or the result leaves the truncation."""
        tab = np.full((self.dimension, self.n_spins), -1, dtype=np.int64)
        index = self.index
        for a, s in enumerate(self.states):
            members = set(s)
            for i in range(self.n_spins):
                if i in members:
                    continue
                b = index.get(tuple(sorted(s + (i,))))
                if b is not None:
                    tab[a, i] = b
        tab.setflags(write=False)
        return tab

    @cached_property
    def lower_table(self) -> np.ndarray:
        """``lower_table[a, i]`` = index of state a with spin i de-excited, -1 if
        spin i is not excited."""
        tab = np.full((self.dimension, self.n_spins), -1, dtype=np.int64)
        up = self.raise_table
        rows, cols = np.nonzero(up >= 0)
        tab[up[rows, cols], cols] = rows
        tab.setflags(write=False)
        return tab

    def single_excitation_indices(self) -> np.ndarray:
        """Indices of |0..1_i..0> for each truncated spin i, free spins unexcited."""
        return np.array([self.index[(i,)] for i in range(self.n_truncated)], dtype=np.int64)


def build_basis(n: int, m_max: int, free_spins: int = 0,
                dimension_cap: int = DEFAULT_DIMENSION_CAP) -> TruncatedBasis:
    return TruncatedBasis(n, m_max, free_spins=free_spins, dimension_cap=dimension_cap)


@dataclass(eq=False)
class SparseOperator:
    """Real symmetric operator on a :class:`TruncatedBasis` (CSR storage)."""

    basis: TruncatedBasis
    matrix: sp.csr_matrix
    symmetric: bool = True

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def entries(self):
        """Coordinate triples (row, col, value), row-major."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return StateVector(self.basis, self.matrix @ other.amplitudes)
        return self.matrix @ other

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator(self.basis, (self.matrix + other.matrix).tocsr(),
                              self.symmetric and other.symmetric)

    def scaled(self, c: float) -> "SparseOperator":
        return SparseOperator(self.basis, (c * self.matrix).tocsr(), self.symmetric)

    def is_symmetric(self) -> bool:
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or np.max(np.abs(diff.data)) == 0.0

    def dump(self, path) -> None:
        """Write ``row col value`` lines."""
        r, c, v = self.entries()
        with open(path, "w") as fh:
            for a, b, x in zip(r, c, v):
                fh.write(f"{a} {b} {x!r}\n")


class StateVector:
    def __init__(self, basis: TruncatedBasis, amplitudes):
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.shape != (basis.dimension,):
            raise ValueError(f"expected {basis.dimension} amplitudes, got {amps.shape}")
        self.basis = basis
        self.amplitudes = amps

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0:
            raise ZeroDivisionError("cannot normalise the zero vector")
        return StateVector(self.basis, self.amplitudes / nrm)

    def inner(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def manifold_weights(self) -> np.ndarray:
        w = np.abs(self.amplitudes) ** 2
        return np.bincount(self.basis.counts, weights=w, minlength=self.basis.m_max + 1)

    def __repr__(self):
        return f"StateVector(dim={self.basis.dimension}, norm={self.norm():.6g})"


def basis_state(basis: TruncatedBasis, excited=()) -> StateVector:
    amps = np.zeros(basis.dimension, dtype=complex)
    amps[basis.index[tuple(sorted(excited))]] = 1.0
    return StateVector(basis, amps)


def vacuum_state(basis: TruncatedBasis) -> StateVector:
    return basis_state(basis, ())


def w_state(basis: TruncatedBasis) -> StateVector:
    """Equal superposition of single excitations over the truncated spins."""
    if basis.m_max < 1:
        raise ValueError("W state needs m_max >= 1")
    n = basis.n_truncated
    amps = np.zeros(basis.dimension, dtype=complex)
    amps[basis.single_excitation_indices()] = 1.0 / np.sqrt(n)
    return StateVector(basis, amps)


def apply_sigma(kind: str, spin: int, state: StateVector) -> tuple[StateVector, float]:
    """Apply sigma_z, sigma_+, sigma_- or sigma_x on ``spin``.

    Returns the new (unnormalised) vector and the squared norm of amplitude
    that was dropped because it would leave the truncated space.
    """
    basis = state.basis
    if not 0 <= spin < basis.n_spins:
        raise IndexError(f"spin {spin} out of range for {basis.n_spins} spins")
    amps = state.amplitudes
    out = np.zeros_like(amps)
    excited = basis.occupation[:, spin]
    leaked = 0.0
    if kind == "z":
        out = np.where(excited, amps, -amps)
    elif kind in ("+", "x"):
        up = basis.raise_table[:, spin]
        ok = up >= 0
        np.add.at(out, up[ok], amps[ok])
        lost = (~ok) & (~excited)
        leaked = float(np.sum(np.abs(amps[lost]) ** 2))
        if kind == "x":
            down = basis.lower_table[:, spin]
            has = down >= 0
            np.add.at(out, down[has], amps[has])
    elif kind == "-":
        down = basis.lower_table[:, spin]
        has = down >= 0
        np.add.at(out, down[has], amps[has])
    else:
        raise ValueError(f"unknown sigma kind {kind!r}")
    return StateVector(basis, out), leaked


def raising_operator(basis: TruncatedBasis, weights, spins=None) -> sp.csr_matrix:
    """Sparse matrix of sum_i weights[i] sigma_+^(i) over ``spins`` (default: truncated spins)."""
    if spins is None:
        spins = range(basis.n_truncated)
    spins = list(spins)
    w = np.asarray(weights, dtype=float)
    tab = basis.raise_table[:, spins]
    rows, k = np.nonzero(tab >= 0)
    return sp.csr_matrix((w[k], (tab[rows, k], rows)), shape=(basis.dimension,) * 2)


def projector_diag(basis: TruncatedBasis, spin: int) -> np.ndarray:
    """Diagonal of (1 + sigma_z^(spin))/2."""
    return basis.occupation[:, spin].astype(float)
