import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvcollective.geometry import SpinGeometry, place_qubit, sample_ensemble
from nvcollective.hamiltonian import (
    HamiltonianSpec,
    build_hamiltonian,
    effective_coupling_prediction,
    hamiltonian_terms,
)
from nvcollective.hilbert import build_basis, w_state
from nvcollective.units import PhysicalParams

from oracles import kron_hamiltonian, kron_index, pair_coupling

Z = (0.0, 0.0, 1.0)


def _geom(points):
    return SpinGeometry(positions=np.asarray(points, dtype=float), axis=np.array(Z))


def _embed_indices(basis):
    return np.array([kron_index(s, basis.n_spins) for s in basis.states])


def test_two_spin_hand_spectrum():
    p = PhysicalParams(omega=0.0)
    g = _geom([[0, 0, 0], [3, 0, 0]])
    v = pair_coupling((0, 0, 0), (3, 0, 0), Z, p.j_dd)
    w = np.linalg.eigvalsh(build_hamiltonian(HamiltonianSpec(g, p, m_max=2)).toarray())
    expect = sorted([0.0, p.delta - v, p.delta + v, 2 * p.delta + v])
    assert np.allclose(w, expect, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000), st.floats(0, 300), st.data())
def test_truncated_h_is_principal_submatrix_of_full_space(n, seed, omega, data):
    g = sample_ensemble(n, 8.0, seed, min_separation=1.0)
    m = data.draw(st.integers(1, n))
    p = PhysicalParams(omega=omega)
    h = build_hamiltonian(HamiltonianSpec(g, p, m_max=m)).toarray()
    ref = kron_hamiltonian(g.positions, Z, p.j_dd, p.delta, omega)
    idx = _embed_indices(build_basis(n, m))
    assert np.allclose(h, ref[np.ix_(idx, idx)], atol=1e-10, rtol=0)


def test_full_space_with_qubit_matches_oracle(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = place_qubit(sample_ensemble(4, 8.0, 2), 12.0, (1.0, 1.0, 0.0))
    for drive in (False, True):
        spec = HamiltonianSpec(g, params, m_max=4, include_qubit=True, qubit_delta=3990.0,
                               apply_transverse_to_qubit=drive)
        basis = spec.basis()
        h = build_hamiltonian(spec, basis).toarray()
        ref = kron_hamiltonian(g.positions, Z, params.j_dd, params.delta, params.omega,
                               qubit=g.qubit_position, qubit_delta=3990.0, drive_qubit=drive)
        idx = _embed_indices(basis)
        assert basis.dimension == 32
        assert np.allclose(h, ref[np.ix_(idx, idx)], atol=1e-10)


def test_qubit_has_own_budget(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = place_qubit(sample_ensemble(5, 8.0, 2), 30.0)
    spec = HamiltonianSpec(g, params, m_max=1, include_qubit=True, qubit_delta=4000.0)
    b = spec.basis()
    assert (0, 5) in b.index and (0, 1) not in b.index
    shared = HamiltonianSpec(g, params, m_max=1, include_qubit=True, qubit_delta=4000.0,
                             qubit_in_budget=True).basis()
    assert (0, 5) not in shared.index and shared.dimension == 7


def test_hermitian_and_terms_split(small_dense, params):
    spec = HamiltonianSpec(small_dense, params, m_max=2)
    h0, x = hamiltonian_terms(spec)
    h = build_hamiltonian(spec)
    assert h.is_symmetric()
    assert np.allclose((h0 + x.scaled(params.omega)).toarray(), h.toarray())
    # flip-flop and dipolar terms conserve excitation number
    counts = h0.basis.counts
    r, c = h0.matrix.nonzero()
    assert np.all(counts[r] == counts[c])
    r, c = x.matrix.nonzero()
    assert np.all(np.abs(counts[r] - counts[c]) == 1)


def test_equilateral_w_is_eigenvector_of_single_excitation_block():
    a = 3.0
    pts = [[a, 0, 0], [-a / 2, a * np.sqrt(3) / 2, 0], [-a / 2, -a * np.sqrt(3) / 2, 0]]
    p = PhysicalParams(omega=50.0)
    spec = HamiltonianSpec(_geom(pts), p, m_max=1)
    b = spec.basis()
    h = build_hamiltonian(spec, b).toarray()
    w = w_state(b).amplitudes.real
    hw = h @ w
    v = pair_coupling(pts[0], pts[1], Z, p.j_dd)
    # H|W> = (delta - 2V)|W> + sqrt(3) omega |0>, nothing else
    rest = hw - (p.delta - 2 * v) * w
    rest[b.index[()]] -= np.sqrt(3) * p.omega
    assert np.abs(rest).max() < 1e-10


def test_effective_coupling_example(params):
    v = effective_coupling_prediction(70, 100.0, params.with_(j_dd=52.0))
    assert v == pytest.approx(np.sqrt(70) * 52e-6)
    assert v == pytest.approx(4.35e-4, rel=0.01)
    with pytest.raises(ValueError):
        effective_coupling_prediction(0.5, 100.0, params)


def test_qubit_spec_requires_fields(params, small_dense):
    with pytest.raises(ValueError):
        HamiltonianSpec(small_dense, params, include_qubit=True, qubit_delta=4000.0)


def test_single_spin_dressing(params):
    g = _geom([[0.0, 0.0, 0.0]])
    w = np.linalg.eigvalsh(build_hamiltonian(HamiltonianSpec(g, params, m_max=1)).toarray())
    root = np.sqrt(params.delta**2 + 4 * params.omega**2)
    assert np.allclose(w, [(params.delta - root) / 2, (params.delta + root) / 2], atol=1e-9)


def test_zero_field_is_block_diagonal(small_dense, params):
    h = build_hamiltonian(HamiltonianSpec(small_dense, params.with_(omega=0.0), m_max=3))
    r, c = h.matrix.nonzero()
    assert np.all(h.basis.counts[r] == h.basis.counts[c])


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 7), st.integers(0, 10_000), st.floats(1, 400))
def test_ground_energy_non_increasing_with_truncation(n, seed, omega):
    g = sample_ensemble(n, 8.0, seed)
    p = PhysicalParams(omega=omega)
    lows = [np.linalg.eigvalsh(build_hamiltonian(HamiltonianSpec(g, p, m_max=m)).toarray())[0]
            for m in range(n + 1)]
    assert all(b <= a + 1e-9 for a, b in zip(lows, lows[1:]))
