"""Eigenmodes, collective enhancement factors and Ω sweeps."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .geometry import SpinGeometry
from .hamiltonian import HamiltonianSpec, build_hamiltonian, hamiltonian_terms
from .hilbert import SparseOperator, StateVector, TruncatedBasis
from .units import PhysicalParams

log = logging.getLogger(__name__)

DENSE_DIMENSION_CAP = 6000
COLLECTIVE_FLOOR = 10.0


class NoCollectiveMode(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class EigenMode:
    energy: float
    vector: StateVector
    n_c: float
    overlap_w: float
    m_weight: np.ndarray


@dataclass
class SpectrumResult:
    basis: TruncatedBasis
    energies: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors
    n_c: np.ndarray
    overlap_w: np.ndarray
    m_weight: np.ndarray  # (modes, m_max + 1)
    vacuum_weight: np.ndarray
    first_index: int = 0  # global index of the first returned eigenpair, when known
    max_residual: float | None = None

    @property
    def collective(self) -> int:
        return int(np.argmax(self.n_c))

    @property
    def vacuum(self) -> int:
        return int(np.argmax(self.vacuum_weight))

    def __len__(self):
        return len(self.energies)

    def mode(self, k: int) -> EigenMode:
        return EigenMode(
            energy=float(self.energies[k]),
            vector=StateVector(self.basis, self.vectors[:, k]),
            n_c=float(self.n_c[k]),
            overlap_w=float(self.overlap_w[k]),
            m_weight=self.m_weight[k],
        )

    @property
    def modes(self) -> list[EigenMode]:
        return [self.mode(k) for k in range(len(self))]


def collective_enhancement(vectors: np.ndarray, basis: TruncatedBasis) -> np.ndarray:
    """N_c = (sum_i <0..1_i..0|phi>)^2 for each column of ``vectors``.

    For complex input the modulus of the sum is squared.
    """
    s = vectors[basis.single_excitation_indices()].sum(axis=0)
    if np.iscomplexobj(s):
        return np.abs(s) ** 2
    return s * s


def w_overlap(vectors: np.ndarray, basis: TruncatedBasis) -> np.ndarray:
    """|<W|phi>|^2 for each column."""
    idx = basis.single_excitation_indices()
    amp = vectors[idx].sum(axis=0) / np.sqrt(len(idx))
    return np.abs(amp) ** 2


def _fix_phase(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude component real and positive
    if vectors.size == 0:
        return vectors
    k = np.argmax(np.abs(vectors), axis=0)
    ref = vectors[k, np.arange(vectors.shape[1])]
    return vectors * (np.abs(ref) / ref)[None, :]


def _analyse(basis, energies, vectors, first_index=0, max_residual=None) -> SpectrumResult:
    vectors = _fix_phase(vectors)
    weights = np.abs(vectors) ** 2
    m_weight = np.zeros((vectors.shape[1], basis.m_max + 1))
    for m in range(basis.m_max + 1):
        m_weight[:, m] = weights[basis.counts == m].sum(axis=0)
    vac = basis.index[()]
    return SpectrumResult(
        basis=basis,
        energies=energies,
        vectors=vectors,
        n_c=collective_enhancement(vectors, basis),
        overlap_w=w_overlap(vectors, basis),
        m_weight=m_weight,
        vacuum_weight=weights[vac],
        first_index=first_index,
        max_residual=max_residual,
    )


def residuals(h: SparseOperator, energies: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    r = h.matrix @ vectors - vectors * energies[None, :]
    return np.linalg.norm(r, axis=0)


def diagonalize(
    h: SparseOperator,
    mode: str = "dense",
    *,
    index_range: tuple[int, int] | None = None,
    window: tuple[float, float] | None = None,
    k: int | None = None,
    center: float | None = None,
    dense_cap: int = DENSE_DIMENSION_CAP,
    residual_tol: float = 1e-8,
    check_residuals: bool | None = None,
    maxiter: int | None = None,
) -> SpectrumResult:
    """Eigenpairs of ``h`` with N_c, W overlap and manifold weights.

    ``mode="dense"`` uses LAPACK, optionally restricted to ``index_range``
    (inclusive, ascending order) or an energy ``window``.
    ``mode="iterative"`` uses shift-invert Lanczos for the ``k`` eigenpairs
    closest to ``center``.
    """
    basis = h.basis
    dim = h.dimension
    first = 0
    if mode == "dense":
        if dim > dense_cap:
            raise ValueError(f"dense diagonalisation limited to dimension {dense_cap} (got {dim})")
        a = h.toarray()
        if index_range is not None:
            lo, hi = index_range
            hi = min(hi, dim - 1)
            w, v = sla.eigh(a, subset_by_index=(lo, hi), driver="evr")
            first = lo
        elif window is not None:
            w, v = sla.eigh(a, subset_by_value=window, driver="evr")
            first = -1
        else:
            w, v = np.linalg.eigh(a)
        del a
        if check_residuals is None:
            check_residuals = v.shape[1] <= 500
    elif mode == "iterative":
        if k is None or center is None:
            raise ValueError("iterative mode needs k and center")
        k = min(k, dim - 2)
        w, v = spla.eigsh(h.matrix.tocsc(), k=k, sigma=center, which="LM", maxiter=maxiter)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        first = -1
        check_residuals = True if check_residuals is None else check_residuals
    else:
        raise ValueError(f"unknown mode {mode!r}")

    res = None
    if check_residuals and len(w):
        res = float(residuals(h, w, v).max())
        scale = max(abs(w).max(), 1.0)
        if res > residual_tol * scale:
            raise ConvergenceError(f"residual {res:.3g} exceeds {residual_tol:g}*|E|max", res)
    return _analyse(basis, w, v, first, res)


def collective_mode_energy(result: SpectrumResult, floor: float = COLLECTIVE_FLOOR) -> float:
    """E_c - E_vacuum: the transition energy the qubit must be tuned to."""
    kc = result.collective
    if result.n_c[kc] < floor:
        raise NoCollectiveMode(f"max N_c = {result.n_c[kc]:.3g} below floor {floor}")
    kv = result.vacuum
    if result.vacuum_weight[kv] < 0.5:
        raise NoCollectiveMode("dressed vacuum not contained in the returned eigenpairs")
    return float(result.energies[kc] - result.energies[kv])


def symmetric_ladder(n: int, params: PhysicalParams, m_max: int) -> np.ndarray:
    """Eigenvalues of the fully symmetric (Dicke) chain without dipolar terms.

    Levels m*delta coupled by omega*sqrt((m+1)(n-m)); the two lowest roots
    estimate the dressed vacuum and the W-like mode.
    """
    m = np.arange(min(m_max, n) + 1)
    off = params.omega * np.sqrt((m[:-1] + 1) * (n - m[:-1]))
    return sla.eigh_tridiagonal(m * params.delta, off, eigvals_only=True)


def _collective_window(n: int, dim: int) -> tuple[int, int]:
    # dressed vacuum plus the single-excitation band and some headroom
    return (0, min(dim - 1, 2 * n))


@dataclass
class SweepRow:
    omega: float
    max_n_c: float = float("nan")
    e_c: float = float("nan")
    gap: float = float("nan")
    ok: bool = True
    error: str = ""


def sweep_omega(
    geom: SpinGeometry,
    params: PhysicalParams,
    omegas,
    m_max: int = 2,
    *,
    full_spectrum: bool = False,
    fail_fast: bool = False,
) -> list[SweepRow]:
    """Max N_c versus transverse field for a single realisation."""
    omegas = list(omegas)
    if not omegas:
        raise ValueError("omegas must be non-empty")
    spec = HamiltonianSpec(geom, params, m_max=m_max)
    h0, x = hamiltonian_terms(spec)
    rows = []
    for om in omegas:
        h = h0 + x.scaled(om) if om else h0
        try:
            if full_spectrum:
                res = diagonalize(h)
            else:
                res = diagonalize(h, index_range=_collective_window(geom.n, h.dimension))
            kc = res.collective
            row = SweepRow(om, float(res.n_c[kc]), float(res.energies[kc]),
                           float(res.energies[kc] - res.energies[res.vacuum]))
        except (ConvergenceError, np.linalg.LinAlgError, ValueError) as exc:
            if fail_fast:
                raise
            log.warning("omega=%s failed: %s", om, exc)
            row = SweepRow(om, ok=False, error=str(exc))
        rows.append(row)
    return rows


@dataclass
class TruncationReport:
    n: int
    m_low: int
    m_high: int
    e_c: tuple[float, float]
    n_c: tuple[float, float]
    delta: float

    @property
    def e_c_change(self) -> float:
        return abs(self.e_c[1] - self.e_c[0])

    @property
    def e_c_change_rel_delta(self) -> float:
        return self.e_c_change / self.delta

    @property
    def n_c_change_rel(self) -> float:
        lo = self.n_c[0]
        return abs(self.n_c[1] - lo) / lo if lo else float("inf")


def _collective_summary(spec: HamiltonianSpec):
    h = build_hamiltonian(spec)
    n = spec.geometry.n
    if h.dimension <= DENSE_DIMENSION_CAP:
        res = diagonalize(h, index_range=_collective_window(n, h.dimension))
    else:
        lad = symmetric_ladder(n, spec.params, spec.m_max)
        res = diagonalize(h, mode="iterative", k=min(3 * n, h.dimension - 2), center=lad[1])
    kc = res.collective
    return float(res.energies[kc] - res.energies[res.vacuum]), float(res.n_c[kc])


def truncation_check(geom: SpinGeometry, params: PhysicalParams, m_low: int = 2,
                     m_high: int = 3) -> TruncationReport:
    """Compare the collective transition energy and N_c between two truncations.

    The energy compared is E_c - E_vacuum (the qubit resonance), not the
    offset-dependent absolute eigenvalue.
    """
    if geom.n > 40:
        raise ValueError("truncation_check is meant for n <= 40")
    lo = _collective_summary(HamiltonianSpec(geom, params, m_max=m_low))
    hi = _collective_summary(HamiltonianSpec(geom, params, m_max=min(m_high, geom.n)))
    return TruncationReport(geom.n, m_low, m_high, (lo[0], hi[0]), (lo[1], hi[1]), params.delta)


SPECTRUM_COLUMNS = ("seed", "omega_MHz", "eigenindex", "energy_MHz", "n_c", "overlap_w", "m1_weight")


def spectrum_rows(result: SpectrumResult, seed, omega):
    base = result.first_index if result.first_index >= 0 else 0
    m1 = result.m_weight[:, 1] if result.m_weight.shape[1] > 1 else np.zeros(len(result))
    for k in range(len(result)):
        yield (seed, omega, base + k, result.energies[k], result.n_c[k], result.overlap_w[k], m1[k])


def write_spectrum_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPECTRUM_COLUMNS)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)
