"""Qubit-ensemble Rabi dynamics: propagation, π-time extraction, distance sweeps.

States evolve as ``exp(-2j*pi*H*t)`` (H in MHz, t in us).  The canonical
experiment starts from the qubit excited and the ensemble in its dressed
vacuum, with the qubit splitting tuned to the collective transition.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .geometry import NearFieldWarning, SpinGeometry, angular_factor, place_qubit
from .hamiltonian import HamiltonianSpec, build_hamiltonian, effective_coupling_prediction
from .hilbert import SparseOperator, StateVector, TruncatedBasis, raising_operator
from .spectrum import (
    COLLECTIVE_FLOOR,
    SpectrumResult,
    _collective_window,
    collective_mode_energy,
    diagonalize,
)
from .units import PhysicalParams

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DENSE_EVOLVE_CAP = 2000
DEFAULT_T_MAX = 2000.0
DEFAULT_STEPS = 2000


class PropagationError(RuntimeError):
    pass


@dataclass
class RabiTrace:
    times: np.ndarray
    p_q: np.ndarray
    t_pi: float | None = None
    v_c: float | None = None
    leaked_norm: float = 0.0
    norm_drift: float = 0.0
    energy_drift: float = 0.0
    meta: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# π-time extraction


def extract_t_pi(times, p) -> float | None:
    """First local minimum of ``p`` below 0.5, refined by a parabola through
    the three samples around it."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(p, dtype=float)
    for i in range(1, len(p) - 1):
        if p[i] < 0.5 and p[i] <= p[i - 1] and p[i] <= p[i + 1]:
            t0, t1, t2 = t[i - 1], t[i], t[i + 1]
            y0, y1, y2 = p[i - 1], p[i], p[i + 1]
            denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
            a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
            b = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom
            if a <= 0:
                return float(t1)
            return float(min(max(-b / (2 * a), t0), t2))
    return None


def v_c_from_t_pi(t_pi: float) -> float:
    """Flip-flop coupling V with p(t) = cos^2(2 pi V t): full transfer at 1/(4V)."""
    return 1.0 / (4.0 * t_pi)


# --------------------------------------------------------------------------
# propagators


def _lanczos(matvec, v, m):
    """Lanczos with full reorthogonalisation; returns (Q, alpha, beta, beta_next)."""
    n = v.shape[0]
    q = np.zeros((n, m), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    q[:, 0] = v
    k_used = m
    for j in range(m):
        w = matvec(q[:, j])
        alpha[j] = np.vdot(q[:, j], w).real
        w = w - q[:, : j + 1] @ (q[:, : j + 1].conj().T @ w)
        w = w - q[:, : j + 1] @ (q[:, : j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13 * max(1.0, abs(alpha[j])):
            k_used = j + 1
            beta[j] = 0.0
            break
        if j + 1 < m:
            q[:, j + 1] = w / b
    return q[:, :k_used], alpha[:k_used], beta[: k_used - 1], beta[k_used - 1]


def _tridiag_exp_e1(alpha, beta, tau):
    """exp(-i tau T) e1 for the symmetric tridiagonal T(alpha, beta)."""
    if len(alpha) == 1:
        return np.array([np.exp(-1j * tau * alpha[0])])
    w, s = sla.eigh_tridiagonal(alpha, beta)
    return s @ (np.exp(-1j * tau * w) * s[0])


def krylov_step(matvec, psi, tau, m=30, tol=1e-10):
    """One Krylov step of exp(-i tau A) psi for Hermitian A given by ``matvec``.

    Returns the propagated vector, the error estimate and the tau actually
    taken (halved until the estimate is below ``tol``).
    """
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        return psi.copy(), 0.0, tau
    q, alpha, beta, b_next = _lanczos(matvec, psi / nrm, m)
    k = len(alpha)
    while True:
        y = _tridiag_exp_e1(alpha, beta, tau)
        err = nrm * abs(b_next) * abs(y[-1]) if b_next else 0.0
        if err <= tol or k < m:
            return nrm * (q @ y), err, tau
        tau *= 0.5
        if abs(tau) < 1e-300:
            raise PropagationError("Krylov step size underflow")


def propagate(h: SparseOperator, psi: StateVector, t: float, tol: float = 1e-10,
              krylov_dim: int = 30) -> StateVector:
    """exp(-2 pi i H t)|psi> via adaptive Krylov steps (t may be negative)."""
    amps = _krylov_evolve(h.matrix, psi.amplitudes, [0.0, t], tol, krylov_dim)[-1]
    return StateVector(h.basis, amps)


def _krylov_evolve(mat, psi0, t_grid, tol, m):
    psi0 = np.asarray(psi0, dtype=complex)
    e0 = float(np.vdot(psi0, mat @ psi0).real / np.vdot(psi0, psi0).real)

    def matvec(x):
        return TWO_PI * (mat @ x - e0 * x)

    out = np.empty((len(t_grid), len(psi0)), dtype=complex)
    psi = psi0.copy()
    t_now = t_grid[0]
    out[0] = psi0
    tau_guess = None
    for g in range(1, len(t_grid)):
        target = t_grid[g]
        while t_now != target:
            remaining = target - t_now
            if tau_guess is None or tau_guess >= abs(remaining):
                tau = remaining
            else:
                tau = math.copysign(tau_guess, remaining)
            psi, _, taken = krylov_step(matvec, psi, tau, m=m, tol=tol)
            if not np.all(np.isfinite(psi)):
                raise PropagationError("non-finite amplitudes during propagation")
            t_now = target if taken == remaining else t_now + taken
            tau_guess = 2 * abs(taken) if taken == tau else abs(taken)
        # the energy shift only removed a global phase; put it back
        out[g] = psi * np.exp(-1j * TWO_PI * e0 * (t_now - t_grid[0]))
    return out


def _probe_mask(basis: TruncatedBasis, probe: int | None) -> np.ndarray:
    probe = basis.n_spins - 1 if probe is None else probe
    return basis.occupation[:, probe]


def evolve(
    h: SparseOperator,
    psi0: StateVector,
    t_grid,
    tol: float = 1e-10,
    method: str = "auto",
    probe: int | None = None,
    krylov_dim: int = 30,
) -> RabiTrace:
    """Propagate ``psi0`` over ``t_grid`` and record the probe spin's excitation.

    ``method`` is ``"krylov"``, ``"dense"`` (full eigendecomposition) or
    ``"auto"`` (dense up to dimension 2000).  ``probe`` defaults to the last
    spin, which is the remote qubit when one is present.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 1 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be ascending and start at 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    mask = _probe_mask(h.basis, probe)
    psi = psi0.amplitudes
    if method == "auto":
        method = "dense" if h.dimension <= DENSE_EVOLVE_CAP else "krylov"
    a = h.matrix
    if method == "dense":
        w, u = np.linalg.eigh(h.toarray())
        c = u.T @ psi
        p_q = np.empty(len(t))
        norms = np.empty(len(t))
        energy = np.empty(len(t))
        chunk = max(1, 2_000_000 // max(1, h.dimension))
        uq = u[mask]
        for s in range(0, len(t), chunk):
            ph = np.exp(-1j * TWO_PI * np.outer(w, t[s:s + chunk])) * c[:, None]
            p_q[s:s + chunk] = np.sum(np.abs(uq @ ph) ** 2, axis=0)
            norms[s:s + chunk] = np.sqrt(np.sum(np.abs(ph) ** 2, axis=0))
            energy[s:s + chunk] = (w @ np.abs(ph) ** 2) / norms[s:s + chunk] ** 2
    elif method == "krylov":
        states = _krylov_evolve(a, psi, t, tol, krylov_dim)
        p_q = np.sum(np.abs(states[:, mask]) ** 2, axis=1)
        norms = np.linalg.norm(states, axis=1)
        energy = np.einsum("ti,ti->t", states.conj(), (a @ states.T).T).real / norms**2
    else:
        raise ValueError(f"unknown method {method!r}")
    t_pi = extract_t_pi(t, p_q)
    n0 = np.linalg.norm(psi)
    e_scale = max(abs(energy[0]), 1e-300)
    return RabiTrace(
        times=t,
        p_q=p_q,
        t_pi=t_pi,
        v_c=None if t_pi is None else v_c_from_t_pi(t_pi),
        norm_drift=float(np.max(np.abs(norms - n0))),
        energy_drift=float(np.max(np.abs(energy - energy[0])) / e_scale),
        meta={"method": method},
    )


# --------------------------------------------------------------------------
# qubit + ensemble experiment


def ensemble_spectrum(geom: SpinGeometry, params: PhysicalParams, m_max: int = 2) -> SpectrumResult:
    """Dressed vacuum and single-excitation band of the ensemble alone."""
    h = build_hamiltonian(HamiltonianSpec(geom.without_qubit(), params, m_max=m_max))
    return diagonalize(h, index_range=_collective_window(geom.n, h.dimension))


def tune_qubit_resonance(geom: SpinGeometry, params: PhysicalParams, m_max: int = 2,
                         spectrum: SpectrumResult | None = None,
                         floor: float = COLLECTIVE_FLOOR) -> float:
    """Qubit splitting resonant with the ensemble's collective transition."""
    spectrum = spectrum or ensemble_spectrum(geom.without_qubit(), params, m_max)
    return collective_mode_energy(spectrum, floor)


def embed_with_qubit(ens_state: np.ndarray, ens_basis: TruncatedBasis,
                     comb_basis: TruncatedBasis, qubit_excited: bool) -> np.ndarray:
    """Tensor |q> with an ensemble amplitude vector in the combined basis."""
    q = comb_basis.n_spins - 1
    out = np.zeros(comb_basis.dimension, dtype=complex)
    for a, s in enumerate(ens_basis.states):
        key = s + (q,) if qubit_excited else s
        b = comb_basis.index.get(key)
        if b is None:
            if ens_state[a] != 0:
                raise ValueError("ensemble state does not fit the combined truncation")
            continue
        out[b] = ens_state[a]
    return out


def _time_grid(t_max, n_steps):
    return np.linspace(0.0, t_max, n_steps)


def _default_t_max(n_c, distance, params, angular):
    try:
        pred = 1.0 / (4.0 * effective_coupling_prediction(max(n_c, 1.0), distance, params,
                                                          abs(angular) or 1.0))
    except ValueError:
        return DEFAULT_T_MAX
    return max(DEFAULT_T_MAX, 3.0 * pred)


@dataclass
class ProjectedModel:
    """Combined Hamiltonian restricted to qubit ⊗ (selected ensemble eigenstates).

    Rows/cols ``[0, K)`` are ``|0_q, k>``; ``[K, 2K)`` are ``|1_q, k>``.
    """

    matrix: np.ndarray
    energies_used: np.ndarray
    vacuum: int


def projected_model(spectrum: SpectrumResult, geom: SpinGeometry, params: PhysicalParams,
                    qubit_delta: float, transverse_on_qubit: bool = False,
                    include_ising: bool = True) -> ProjectedModel:
    from .geometry import build_couplings

    c = build_couplings(geom, params)
    basis = spectrum.basis
    u = spectrum.vectors
    e = spectrum.energies
    k = len(e)
    up = raising_operator(basis, c.v_qubit)
    d = basis.occupation[:, : geom.n].astype(float) @ c.v_qubit
    hop = -(u.T @ (up @ u))  # <0_q,k| H |1_q,l>
    ising = u.T @ (d[:, None] * u)
    m = np.zeros((2 * k, 2 * k))
    m[:k, :k] = np.diag(e)
    m[k:, k:] = np.diag(e + qubit_delta) + (ising if include_ising else 0.0)
    m[:k, k:] = hop
    m[k:, :k] = hop.T
    if transverse_on_qubit:
        m[:k, k:] += params.omega * np.eye(k)
        m[k:, :k] += params.omega * np.eye(k)
    m = 0.5 * (m + m.T)
    return ProjectedModel(matrix=m, energies_used=e, vacuum=spectrum.vacuum)


def _dense_trace(mat: np.ndarray, psi0: np.ndarray, mask: np.ndarray, t: np.ndarray):
    w, u = np.linalg.eigh(mat)
    c = u.T @ psi0
    uq = u[mask]
    ph = np.exp(-1j * TWO_PI * np.outer(w, t)) * c[:, None]
    return np.sum(np.abs(uq @ ph) ** 2, axis=0), w, u, c


def doublet_half_gap(w: np.ndarray, c: np.ndarray) -> float:
    """Half splitting of the two eigenstates carrying the most initial weight."""
    top = np.argsort(np.abs(c) ** 2)[-2:]
    return float(abs(w[top[1]] - w[top[0]]) / 2)


def rabi_experiment(
    geom: SpinGeometry,
    params: PhysicalParams,
    distance: float | None = None,
    m_max: int = 2,
    t_max: float | None = None,
    n_steps: int = DEFAULT_STEPS,
    *,
    direction=(1.0, 0.0, 0.0),
    method: str = "projected",
    initial: str = "dressed",
    spectrum: SpectrumResult | None = None,
    evolve_method: str = "auto",
    tol: float = 1e-10,
    floor: float = COLLECTIVE_FLOOR,
    include_ising: bool = True,
) -> RabiTrace:
    """Rabi exchange between a remote qubit and the ensemble's collective mode.

    ``method="projected"`` works in the ensemble eigenbasis returned by the
    collective-window diagonalisation; ``method="full"`` propagates the whole
    combined Hamiltonian with :func:`evolve`.  ``initial="bare"`` starts from
    the undressed all-ground ensemble instead of the dressed vacuum.
    ``include_ising=False`` drops the qubit's diagonal shift on ensemble
    levels (projected method only), for sensitivity checks.
    """
    if distance is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearFieldWarning)
            geom = place_qubit(geom, distance, direction)
    if geom.qubit_position is None:
        raise ValueError("no qubit position: pass distance or a geometry with a qubit")
    ens_geom = geom.without_qubit()
    spectrum = spectrum or ensemble_spectrum(ens_geom, params, m_max)
    qubit_delta = collective_mode_energy(spectrum, floor)
    kc, kv = spectrum.collective, spectrum.vacuum
    n_c = float(spectrum.n_c[kc])
    ang = angular_factor(geom)
    dist = geom.qubit_distance
    if t_max is None:
        t_max = _default_t_max(n_c, dist, params, ang)
    t = _time_grid(t_max, n_steps)
    meta = {"qubit_delta": qubit_delta, "n_c": n_c, "distance": dist, "angular": ang,
            "method": method, "initial": initial}

    if method == "projected":
        model = projected_model(spectrum, geom, params, qubit_delta, include_ising=include_ising)
        k = len(spectrum.energies)
        psi0 = np.zeros(2 * k)
        leaked = 0.0
        if initial == "dressed":
            psi0[k + kv] = 1.0
        elif initial == "bare":
            vac = spectrum.basis.index[()]
            psi0[k:] = spectrum.vectors[vac]
            leaked = float(1.0 - psi0 @ psi0)
            psi0 /= np.linalg.norm(psi0)
        else:
            raise ValueError(f"unknown initial state {initial!r}")
        mask = np.zeros(2 * k, dtype=bool)
        mask[k:] = True
        p_q, w, u, c = _dense_trace(model.matrix, psi0, mask, t)
        energy = float(np.sum(w * np.abs(c) ** 2))
        t_pi = extract_t_pi(t, p_q)
        meta["half_gap"] = doublet_half_gap(w, c)
        meta["energy"] = energy
        return RabiTrace(t, p_q, t_pi, None if t_pi is None else v_c_from_t_pi(t_pi),
                         leaked_norm=leaked, meta=meta)

    if method != "full":
        raise ValueError(f"unknown method {method!r}")
    spec = HamiltonianSpec(geom, params, m_max=m_max, include_qubit=True, qubit_delta=qubit_delta)
    comb = spec.basis()
    h = build_hamiltonian(spec, comb)
    ens_basis = spectrum.basis
    if initial == "dressed":
        ens_vec = spectrum.vectors[:, kv]
    elif initial == "bare":
        ens_vec = np.zeros(ens_basis.dimension)
        ens_vec[ens_basis.index[()]] = 1.0
    else:
        raise ValueError(f"unknown initial state {initial!r}")
    psi0 = StateVector(comb, embed_with_qubit(ens_vec, ens_basis, comb, True))
    trace = evolve(h, psi0, t, tol=tol, method=evolve_method)
    trace.meta.update(meta)
    trace.meta["evolve_method"] = trace.meta.pop("method", evolve_method)
    trace.meta["method"] = "full"
    return trace


def combined_half_gap(geom: SpinGeometry, params: PhysicalParams, distance: float, m_max: int = 2,
                      direction=(1.0, 0.0, 0.0), spectrum: SpectrumResult | None = None,
                      floor: float = COLLECTIVE_FLOOR) -> float:
    """Half-splitting of the resonant doublet from diagonalising the full combined H."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearFieldWarning)
        geom = place_qubit(geom, distance, direction)
    spectrum = spectrum or ensemble_spectrum(geom.without_qubit(), params, m_max)
    spec = HamiltonianSpec(geom, params, m_max=m_max, include_qubit=True,
                           qubit_delta=collective_mode_energy(spectrum, floor))
    comb = spec.basis()
    h = build_hamiltonian(spec, comb)
    psi0 = embed_with_qubit(spectrum.vectors[:, spectrum.vacuum], spectrum.basis, comb, True)
    w, u = np.linalg.eigh(h.toarray())
    return doublet_half_gap(w, u.T @ psi0)


@dataclass
class DistanceRow:
    distance: float
    t_pi: float | None
    v_c: float | None
    n_c: float
    effective_r: float | None
    near_field: bool
    min_p_q: float


@dataclass
class DistanceSweep:
    rows: list[DistanceRow]
    slope: float | None
    slope_range: tuple[float, float] | None


def loglog_slope(r, v) -> float:
    x = np.log(np.asarray(r, dtype=float))
    y = np.log(np.abs(np.asarray(v, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


def sweep_distance(
    geom: SpinGeometry,
    params: PhysicalParams,
    distances,
    m_max: int = 2,
    *,
    direction=(1.0, 0.0, 0.0),
    n_steps: int = DEFAULT_STEPS,
    spectrum: SpectrumResult | None = None,
    traces: dict | None = None,
    floor: float = COLLECTIVE_FLOOR,
) -> DistanceSweep:
    """V_c versus qubit distance; slope fitted over distances >= one ensemble diameter."""
    distances = sorted(float(r) for r in distances)
    if len(distances) < 2 or distances[-1] < 3 * distances[0]:
        raise ValueError("distances must span at least a factor of 3")
    ens = geom.without_qubit()
    spectrum = spectrum or ensemble_spectrum(ens, params, m_max)
    n_c = float(spectrum.n_c[spectrum.collective])
    diameter = geom.diameter or 0.0
    rows = []
    for r in distances:
        tr = rabi_experiment(ens, params, r, m_max, n_steps=n_steps, direction=direction,
                             spectrum=spectrum, floor=floor)
        if traces is not None:
            traces[r] = tr
        eff = None
        if tr.v_c is not None:
            pred = effective_coupling_prediction(n_c, 1.0, params, tr.meta["angular"])
            eff = (abs(pred) / tr.v_c) ** (1.0 / 3.0)
        rows.append(DistanceRow(r, tr.t_pi, tr.v_c, n_c, eff, r < diameter, float(tr.p_q.min())))
        if tr.t_pi is None:
            log.warning("no pi transfer within t_max at R=%s nm", r)
    fit = [(row.distance, row.v_c) for row in rows if row.v_c is not None and row.distance >= diameter]
    slope = loglog_slope(*zip(*fit)) if len(fit) >= 2 else None
    rng = (fit[0][0], fit[-1][0]) if len(fit) >= 2 else None
    return DistanceSweep(rows, slope, rng)


TRACE_COLUMNS = ("seed", "R_nm", "t_us", "p_q")
SWEEP_COLUMNS = ("seed", "R_nm", "t_pi_us", "v_c_MHz", "n_c", "eff_R_nm", "slope")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_trace_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def trace_rows(trace: RabiTrace, seed, distance):
    for t, p in zip(trace.times, trace.p_q):
        yield (seed, distance, t, p)


def sweep_rows(sweep: DistanceSweep, seed):
    for r in sweep.rows:
        yield (seed, r.distance, r.t_pi, r.v_c, r.n_c, r.effective_r, sweep.slope)


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
