import csv
import math

import pytest
from hypothesis import given, strategies as st

from nvcollective.decoherence import (
    collective_swap_time,
    dephasing_dominated,
    dephasing_leak_probability,
    depolarization_enhancement,
    error_budget,
    flip_down_probability,
    gate_error,
    monte_carlo_jump_oracle,
    required_t2,
    write_budget_csv,
)
from nvcollective.units import PhysicalParams


def test_closed_forms():
    assert dephasing_leak_probability(100) == 0.0396
    assert flip_down_probability(100) == 0.01
    assert depolarization_enhancement(100) == 100


@given(st.integers(1, 10_000))
def test_aggregates(n):
    assert n * dephasing_leak_probability(n) == pytest.approx(4 * (1 - 1 / n))
    assert n * flip_down_probability(n) == pytest.approx(1.0)


def test_invalid_n():
    with pytest.raises(ValueError):
        dephasing_leak_probability(0)


@pytest.mark.parametrize("jump,exact", [("dephase", dephasing_leak_probability),
                                        ("flip_down", flip_down_probability)])
@pytest.mark.parametrize("n", [2, 10])
def test_monte_carlo_small(jump, exact, n):
    mean, se = monte_carlo_jump_oracle(n, jump, samples=20_000, seed=5)
    # n=2 dephasing leaks with certainty, so the standard error is exactly 0
    assert abs(mean - exact(n)) <= 4 * se + 1e-15


def test_monte_carlo_deterministic():
    assert monte_carlo_jump_oracle(10, "dephase", 10_000, seed=3) == \
        monte_carlo_jump_oracle(10, "dephase", 10_000, seed=3)
    with pytest.raises(ValueError):
        monte_carlo_jump_oracle(10, "teleport")
    with pytest.raises(ValueError):
        monte_carlo_jump_oracle(10, "dephase", samples=100)


def test_gate_error_examples():
    assert gate_error(600, 11_000, 4) == pytest.approx(1.0e-2, rel=0.05)
    assert gate_error(70, 700, 2) == pytest.approx(8e-3, rel=0.01)
    assert gate_error(600, math.inf) == 0.0


def test_required_t2_examples():
    assert 10_800 <= required_t2(1e-2, 600, 4) <= 11_400
    assert 2_800 <= required_t2(1e-4, 70, 2) <= 3_200
    with pytest.raises(ValueError):
        required_t2(1.5, 600)


@given(st.floats(1e-8, 0.5), st.floats(1.0, 5e3), st.integers(1, 8))
def test_round_trip(eps, t_pi, n_swaps):
    assert gate_error(t_pi, required_t2(eps, t_pi, n_swaps), n_swaps) == pytest.approx(eps, rel=1e-10)


@given(st.floats(1.0, 1e3), st.floats(1e2, 1e5), st.floats(1e2, 1e5))
def test_gate_error_monotone_in_t2(t_pi, a, b):
    lo, hi = sorted((a, b))
    assert gate_error(t_pi, hi) <= gate_error(t_pi, lo)


def test_swap_times():
    p = PhysicalParams(j_dd=52.0)
    t_n = collective_swap_time(100, 100.0, p, "N")
    assert t_n == pytest.approx(1 / (4 * 100 * 52e-6))
    assert 35 <= t_n <= 140
    assert collective_swap_time(70, 100.0, p, "sqrtN") == pytest.approx(575, rel=0.01)
    with pytest.raises(ValueError):
        collective_swap_time(70, 100.0, p, "cubic")


def test_dephasing_dominated():
    p = PhysicalParams(t2=1000.0, t1_up=1e6)
    assert dephasing_dominated(p, 100)
    assert not dephasing_dominated(p, 10_000)


def test_budget_csv(tmp_path):
    b = error_budget(100, 600.0, 11_000.0, params=PhysicalParams())
    assert b.p_dephase_leak == 0.0396 and b.dephasing_dominated is False
    write_budget_csv(tmp_path / "b.csv", [b])
    rows = list(csv.reader((tmp_path / "b.csv").open()))
    assert rows[0] == ["n", "t_pi_us", "t2_us", "n_swaps", "mode", "gate_error", "required_t2_us"]
    assert float(rows[1][6]) == b.required_t2
