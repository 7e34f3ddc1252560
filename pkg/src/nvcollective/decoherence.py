"""Error budget of the collective W-state qubit and two-qubit gate arithmetic."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import effective_coupling_prediction
from .hilbert import apply_sigma, build_basis, vacuum_state, w_state
from .units import PhysicalParams

DEFAULT_SWAPS = 4


def dephasing_leak_probability(n: int) -> float:
    """Probability that one sigma_z error on a W state leaves the W state.

    Equals 1 - |<W|sigma_z|W>|^2 = (4/n)(1 - 1/n).  Multiply by the
    single-spin dephasing probability, and by n for the whole ensemble; the
    aggregate 4(1 - 1/n) saturates instead of growing with n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return (4.0 / n) * (1.0 - 1.0 / n)


def flip_down_probability(n: int) -> float:
    """|<0|sigma_-|W>|^2 = 1/n per 1->0 event."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.0 / n


def depolarization_enhancement(n: int) -> int:
    """Any 0->1 flip detunes the collective state, so that channel scales with n."""
    return n


def dephasing_dominated(params: PhysicalParams, n: int) -> bool:
    """True when T1(0->1)/n stays longer than T2."""
    return params.t1_up / n > params.t2


def monte_carlo_jump_oracle(n: int, jump: str, samples: int = 100_000, seed: int = 0,
                            shards: int = 8) -> tuple[float, float]:
    """Sampled estimate of the W-state error probability for one jump.

    Each sample applies the jump (``"dephase"``: sigma_z, ``"flip_down"``:
    sigma_-) to a uniformly random spin of |W>, then draws whether the state
    is found outside |W> (dephase) or in |0> (flip_down).  Returns the sample
    mean and its standard error.  Shards use spawned seeds and are reduced in
    a fixed order.
    """
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    basis = build_basis(n, 1)
    w = w_state(basis)
    vac = vacuum_state(basis)
    per_spin = np.empty(n)
    for i in range(n):
        if jump == "dephase":
            psi, _ = apply_sigma("z", i, w)
            per_spin[i] = 1.0 - abs(w.inner(psi)) ** 2 / psi.norm() ** 2
        elif jump == "flip_down":
            psi, _ = apply_sigma("-", i, w)
            per_spin[i] = abs(vac.inner(psi)) ** 2
        else:
            raise ValueError(f"unknown jump {jump!r}")
    per_spin = np.clip(per_spin, 0.0, 1.0)
    counts = [samples // shards + (1 if k < samples % shards else 0) for k in range(shards)]
    hits = 0
    for rng_seed, m in zip(np.random.SeedSequence(seed).spawn(shards), counts):
        rng = np.random.default_rng(rng_seed)
        spins = rng.integers(0, n, size=m)
        hits += int(np.count_nonzero(rng.random(m) < per_spin[spins]))
    mean = hits / samples
    stderr = math.sqrt(mean * (1.0 - mean) / samples)
    return mean, stderr


def gate_error(t_pi: float, t2_eff: float, n_swaps: int = DEFAULT_SWAPS) -> float:
    """1 - exp[-(n_swaps t_pi / T2)^3] for spin-echo protected swaps."""
    if t_pi <= 0 or t2_eff <= 0 or n_swaps <= 0:
        raise ValueError("t_pi, t2_eff and n_swaps must be positive")
    if math.isinf(t2_eff):
        return 0.0
    return -math.expm1(-((n_swaps * t_pi / t2_eff) ** 3))


def required_t2(epsilon: float, t_pi: float, n_swaps: int = DEFAULT_SWAPS) -> float:
    """Dephasing time giving gate error ``epsilon`` (inverse of :func:`gate_error`)."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    return n_swaps * t_pi / (-math.log1p(-epsilon)) ** (1.0 / 3.0)


def collective_swap_time(n_c: float, distance: float, params: PhysicalParams,
                         enhancement_mode: str = "sqrtN", angular: float = 1.0) -> float:
    """SWAP time 1/(4V) for qubit-ensemble (``sqrtN``) or ensemble-ensemble (``N``) coupling."""
    if enhancement_mode == "sqrtN":
        v = effective_coupling_prediction(n_c, distance, params, angular)
    elif enhancement_mode == "N":
        v = effective_coupling_prediction(n_c * n_c, distance, params, angular)
    else:
        raise ValueError(f"unknown enhancement mode {enhancement_mode!r}")
    return 1.0 / (4.0 * v)


@dataclass(frozen=True)
class ErrorBudget:
    n: int
    p_dephase_leak: float
    p_flip_down: float
    depolarization_enhancement: int
    gate_error: float
    required_t2: float
    n_swaps: int
    enhancement_mode: str
    t_pi: float
    t2: float
    epsilon: float
    dephasing_dominated: bool | None = None


def error_budget(n: int, t_pi: float, t2: float, n_swaps: int = DEFAULT_SWAPS,
                 enhancement_mode: str = "sqrtN", epsilon: float = 1e-2,
                 params: PhysicalParams | None = None) -> ErrorBudget:
    return ErrorBudget(
        n=n,
        p_dephase_leak=dephasing_leak_probability(n),
        p_flip_down=flip_down_probability(n),
        depolarization_enhancement=depolarization_enhancement(n),
        gate_error=gate_error(t_pi, t2, n_swaps),
        required_t2=required_t2(epsilon, t_pi, n_swaps),
        n_swaps=n_swaps,
        enhancement_mode=enhancement_mode,
        t_pi=t_pi,
        t2=t2,
        epsilon=epsilon,
        dephasing_dominated=None if params is None else dephasing_dominated(params, n),
    )


BUDGET_COLUMNS = ("n", "t_pi_us", "t2_us", "n_swaps", "mode", "gate_error", "required_t2_us")


def budget_row(b: ErrorBudget):
    return (b.n, b.t_pi, b.t2, b.n_swaps, b.enhancement_mode, b.gate_error, b.required_t2)


def write_budget_csv(path, budgets) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BUDGET_COLUMNS)
        for b in budgets:
            w.writerow([repr(float(x)) if isinstance(x, float) else str(x) for x in budget_row(b)])
