import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvcollective.geometry import (
    NearFieldWarning,
    PackingError,
    angular_factor,
    build_couplings,
    dipolar_coupling,
    load_positions,
    nearest_neighbor_distances,
    place_qubit,
    sample_ensemble,
    save_positions,
    typical_vdd,
)
from nvcollective.units import PhysicalParams

from oracles import pair_coupling

Z = (0.0, 0.0, 1.0)
coords = st.floats(-20, 20, allow_nan=False)
points = st.tuples(coords, coords, coords)


def test_perpendicular_and_axial_pairs():
    assert dipolar_coupling((0, 0, 0), (3, 0, 0), Z, 52.0) == pytest.approx(52 / 27)
    assert dipolar_coupling((0, 0, 0), (0, 0, 3), Z, 52.0) == pytest.approx(-2 * 52 / 27)


def test_magic_angle_vanishes():
    theta = np.arccos(1 / np.sqrt(3))
    p = (np.sin(theta) * 2, 0.0, np.cos(theta) * 2)
    assert abs(dipolar_coupling((0, 0, 0), p, Z, 52.0)) < 1e-12


def test_coincident_points_raise():
    with pytest.raises(ValueError):
        dipolar_coupling((1, 2, 3), (1, 2, 3), Z, 52.0)


@given(points, points)
def test_coupling_symmetric_and_matches_oracle(p1, p2):
    if np.linalg.norm(np.subtract(p1, p2)) < 1e-3:
        return
    v = dipolar_coupling(p1, p2, Z, 52.0)
    assert v == dipolar_coupling(p2, p1, Z, 52.0)
    assert v == pytest.approx(pair_coupling(p1, p2, Z, 52.0), rel=1e-10)


@given(points, st.floats(0.1, 10))
def test_inverse_cube_scaling(p, s):
    if np.linalg.norm(p) < 1e-2:
        return
    v1 = dipolar_coupling((0, 0, 0), p, Z, 52.0)
    v2 = dipolar_coupling((0, 0, 0), tuple(s * c for c in p), Z, 52.0)
    assert v2 == pytest.approx(v1 / s**3, rel=1e-9, abs=1e-12)


def test_sampling_is_deterministic():
    a = sample_ensemble(100, 20.0, 1)
    b = sample_ensemble(100, 20.0, 1)
    c = sample_ensemble(100, 20.0, 2)
    assert a == b
    assert not np.array_equal(a.positions, c.positions)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10_000))
def test_sampling_invariants(n, seed):
    g = sample_ensemble(n, 20.0, seed, min_separation=1.0)
    assert g.n == n
    assert np.all(np.linalg.norm(g.positions, axis=1) <= 10.0 + 1e-12)
    assert nearest_neighbor_distances(g).min() >= 1.0


def test_positions_read_only():
    g = sample_ensemble(5, 20.0, 1)
    with pytest.raises(ValueError):
        g.positions[0, 0] = 1.0


def test_seed_one_nearest_neighbour_scale():
    g = sample_ensemble(100, 20.0, 1, min_separation=1.0)
    nn = nearest_neighbor_distances(g).mean()
    assert 2.0 <= nn <= 4.0
    assert nn == pytest.approx(2.1323476, abs=1e-6)


def test_typical_vdd_pinned():
    g = sample_ensemble(100, 20.0, 1, min_separation=1.0)
    v = typical_vdd(g, build_couplings(g, PhysicalParams()))
    assert 0.3 < v < 10.0
    assert v == pytest.approx(4.2311388, abs=1e-6)


def test_overpacked_ball_raises():
    with pytest.raises(PackingError):
        sample_ensemble(500, 5.0, 1, min_separation=1.0, max_attempts=20_000)


def test_qubit_placement_and_coupling(params):
    g = place_qubit(sample_ensemble(100, 20.0, 1), 100.0)
    assert g.qubit_distance == pytest.approx(100.0)
    assert not g.near_field
    assert angular_factor(g) == pytest.approx(1.0)
    vq = build_couplings(g, params).v_qubit
    assert np.mean(vq) == pytest.approx(params.j_dd * 1e-6, rel=0.1)
    for i in (0, 17, 99):
        assert vq[i] == pytest.approx(pair_coupling(g.positions[i], g.qubit_position, Z, params.j_dd))


def test_near_field_warning():
    g = sample_ensemble(20, 20.0, 1)
    with pytest.warns(NearFieldWarning):
        out = place_qubit(g, 15.0)
    assert out.near_field
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        place_qubit(g, 40.0)


def test_coupling_matrix_properties(params):
    g = sample_ensemble(30, 20.0, 4)
    v0 = build_couplings(g, params).v0
    assert np.array_equal(v0, v0.T)
    assert np.all(np.diag(v0) == 0)
    assert v0[3, 7] == dipolar_coupling(g.positions[3], g.positions[7], g.axis, params.j_dd)


def test_positions_round_trip(tmp_path):
    g = place_qubit(sample_ensemble(10, 20.0, 3), 50.0)
    save_positions(g, tmp_path / "pos.txt")
    back = load_positions(tmp_path / "pos.txt")
    assert np.array_equal(back.positions, g.positions)
    assert np.array_equal(back.qubit_position, g.qubit_position)
    assert back.seed == 3
