import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvcollective.geometry import SpinGeometry, sample_ensemble
from nvcollective.hamiltonian import HamiltonianSpec, build_hamiltonian
from nvcollective.hilbert import basis_state, build_basis, w_state
from nvcollective.spectrum import (
    ConvergenceError,
    NoCollectiveMode,
    collective_enhancement,
    collective_mode_energy,
    diagonalize,
    spectrum_rows,
    sweep_omega,
    symmetric_ladder,
    truncation_check,
    w_overlap,
    write_spectrum_csv,
)
from nvcollective.units import PhysicalParams, perturbative_j

from oracles import kron_hamiltonian, pair_coupling

Z = (0.0, 0.0, 1.0)


def test_enhancement_of_reference_states():
    b = build_basis(7, 2)
    w = w_state(b).amplitudes[:, None]
    assert collective_enhancement(w, b)[0] == pytest.approx(7.0)
    assert w_overlap(w, b)[0] == pytest.approx(1.0)
    e = basis_state(b, (3,)).amplitudes[:, None]
    assert collective_enhancement(e, b)[0] == pytest.approx(1.0)
    assert collective_enhancement(basis_state(b, ()).amplitudes[:, None], b)[0] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(0, 1000))
def test_n_c_equals_n_times_w_overlap(n, seed):
    v = np.random.default_rng(seed).normal(size=(build_basis(n, 2).dimension, 3))
    v /= np.linalg.norm(v, axis=0)
    b = build_basis(n, 2)
    assert np.allclose(collective_enhancement(v, b), n * w_overlap(v, b))
    assert np.all(collective_enhancement(v, b) <= n + 1e-12)


def test_two_spin_toy():
    p = PhysicalParams(omega=0.0)
    g = SpinGeometry(positions=np.array([[0.0, 0, 0], [0, 3.0, 0]]), axis=np.array(Z))
    res = diagonalize(build_hamiltonian(HamiltonianSpec(g, p, m_max=2)))
    v = pair_coupling((0, 0, 0), (0, 3, 0), Z, p.j_dd)
    assert np.allclose(res.energies, sorted([0, p.delta - v, p.delta + v, 2 * p.delta + v]),
                       atol=1e-10)
    # the lower m=1 level is the symmetric state (hop element is -V)
    k = int(np.argmin(np.abs(res.energies - (p.delta - v))))
    assert res.n_c[k] == pytest.approx(2.0)


@pytest.mark.parametrize("n,seed", [(4, 1), (6, 2), (8, 3)])
def test_full_space_eigenvalues_match_oracle(n, seed, params):
    g = sample_ensemble(n, 8.0, seed)
    res = diagonalize(build_hamiltonian(HamiltonianSpec(g, params, m_max=n)))
    ref = np.linalg.eigvalsh(kron_hamiltonian(g.positions, Z, params.j_dd, params.delta, params.omega))
    assert np.max(np.abs(res.energies - ref)) < 1e-9


def test_phase_convention(small_dense, params):
    res = diagonalize(build_hamiltonian(HamiltonianSpec(small_dense, params, m_max=2)))
    k = np.argmax(np.abs(res.vectors), axis=0)
    lead = res.vectors[k, np.arange(res.vectors.shape[1])]
    assert np.all(lead > 0)


def test_window_and_iterative_agree_with_full(small_dense, params):
    h = build_hamiltonian(HamiltonianSpec(small_dense, params, m_max=2))
    full = diagonalize(h)
    part = diagonalize(h, index_range=(0, 24))
    assert part.first_index == 0
    assert np.allclose(part.energies, full.energies[:25], atol=1e-9)
    assert np.allclose(part.n_c, full.n_c[:25], atol=1e-8)
    centre = full.energies[full.collective]
    it = diagonalize(h, mode="iterative", k=6, center=centre)
    assert np.min(np.abs(it.energies - centre)) < 1e-8
    assert it.n_c.max() == pytest.approx(full.n_c.max(), rel=1e-7)
    win = diagonalize(h, window=(centre - 1e-6, centre + 1e-6))
    assert len(win) == 1


def test_residuals_and_manifold_weights(small_dense, params):
    h = build_hamiltonian(HamiltonianSpec(small_dense, params, m_max=2))
    res = diagonalize(h, index_range=(0, 20))
    assert res.max_residual < 1e-8 * abs(res.energies).max()
    assert np.allclose(res.m_weight.sum(axis=1), 1.0)
    assert res.vacuum == 0 and res.vacuum_weight[0] > 0.9


def test_dense_cap(small_dense, params):
    h = build_hamiltonian(HamiltonianSpec(small_dense, params, m_max=2))
    with pytest.raises(ValueError):
        diagonalize(h, dense_cap=10)
    with pytest.raises(ValueError):
        diagonalize(h, mode="bogus")


def test_collective_floor(small_dense, params):
    res = diagonalize(build_hamiltonian(HamiltonianSpec(small_dense, params, m_max=2)))
    with pytest.raises(NoCollectiveMode):
        collective_mode_energy(res, floor=10.0)
    assert collective_mode_energy(res, floor=1.0) > params.delta - 50


def test_resonance_in_perturbative_band(params):
    # dilute: dipolar spread negligible next to omega^2/delta
    for n in (5, 10, 20):
        g = sample_ensemble(n, 60.0, 3)
        res = diagonalize(build_hamiltonian(HamiltonianSpec(g, params, m_max=2)))
        e = collective_mode_energy(res, floor=1.0)
        j = perturbative_j(params, n)
        assert params.delta <= e <= params.delta + 2 * j
        assert e == pytest.approx(params.delta + j, rel=0.1)
        # each spin's dressed two-level gap dominates the shift at this density
        assert e == pytest.approx(math.sqrt(params.delta**2 + 4 * params.omega**2), abs=3.0)


def test_symmetric_ladder_is_noninteracting_ground(params):
    p = params.with_(j_dd=1e-12)
    g = sample_ensemble(8, 20.0, 1)
    res = diagonalize(build_hamiltonian(HamiltonianSpec(g, p, m_max=2)))
    lad = symmetric_ladder(8, p, 2)
    assert res.energies[0] == pytest.approx(lad[0], abs=1e-8)
    assert np.min(np.abs(res.energies - lad[1])) < 1e-8


def test_sweep_omega_rows(small_dense, params):
    rows = sweep_omega(small_dense, params, [0.0, 110.0])
    assert [r.omega for r in rows] == [0.0, 110.0]
    assert all(r.ok for r in rows)
    assert rows[0].gap == pytest.approx(rows[0].e_c)
    with pytest.raises(ValueError):
        sweep_omega(small_dense, params, [])


def test_truncation_check_small_full_space(params):
    g = sample_ensemble(10, 20.0, 1)
    rep = truncation_check(g, params, m_low=3, m_high=10)
    assert rep.e_c_change_rel_delta < 0.01
    assert rep.n_c_change_rel < 0.05
    with pytest.raises(ValueError):
        truncation_check(sample_ensemble(41, 40.0, 1), params)


def test_spectrum_csv(tmp_path, small_dense, params):
    res = diagonalize(build_hamiltonian(HamiltonianSpec(small_dense, params, m_max=1)))
    path = tmp_path / "s.csv"
    write_spectrum_csv(path, spectrum_rows(res, 1, params.omega))
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["seed", "omega_MHz", "eigenindex", "energy_MHz", "n_c", "overlap_w", "m1_weight"]
    assert len(rows) == 1 + 13
    assert float(rows[1][3]) == res.energies[0]
