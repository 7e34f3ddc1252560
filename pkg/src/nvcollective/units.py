"""Units, physical constants and parameter validation.

Unit convention (fixed, global):

* energies/frequencies in MHz, ordinary (not angular) frequency, Planck constant h = 1
* times in microseconds
* lengths in nanometres

so that 1 MHz * 1 us = 1 cycle.  A state therefore evolves as
``exp(-2j*pi*H*t)`` with ``H`` in MHz and ``t`` in us.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scipy import constants as _c

# g-factor of the NV electronic spin
NV_G_FACTOR = 2.0023

_HZ_PER_MHZ = 1e6
_M3_PER_NM3 = 1e-27


def nv_dipolar_constant_si(g: float = NV_G_FACTOR) -> float:
    """mu0 (g muB)^2 / (4 pi h) in Hz m^3."""
    mu_b = _c.physical_constants["Bohr magneton"][0]
    return _c.mu_0 * (g * mu_b) ** 2 / (4 * math.pi * _c.h)


def j_dd_to_si(j_dd_mhz_nm3: float) -> float:
    """Convert a dipolar constant from MHz nm^3 to Hz m^3."""
    return j_dd_mhz_nm3 * _HZ_PER_MHZ * _M3_PER_NM3


def j_dd_from_si(j_dd_hz_m3: float) -> float:
    """Convert a dipolar constant from Hz m^3 to MHz nm^3."""
    return j_dd_hz_m3 / (_HZ_PER_MHZ * _M3_PER_NM3)


NV_J_DD = j_dd_from_si(nv_dipolar_constant_si())


@dataclass(frozen=True)
class PhysicalParams:
    """Model parameters in MHz / us / nm.

    ``j_dd`` is the dipolar prefactor mu^2/h so that two spins a distance d
    apart couple with ``j_dd * (1 - 3 cos^2 theta) / d**3``.  Times may be
    ``math.inf``.
    """

    delta: float = 4000.0
    omega: float = 110.0
    j_dd: float = NV_J_DD
    omega_ext: float = 0.0
    t2: float = math.inf
    t1_down: float = math.inf
    t1_up: float = math.inf

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("invalid PhysicalParams: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        for name in ("delta", "j_dd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                out.append(f"{name} must be finite and > 0 (got {v})")
        for name in ("omega", "omega_ext"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                out.append(f"{name} must be finite and >= 0 (got {v})")
        for name in ("t2", "t1_down", "t1_up"):
            v = getattr(self, name)
            if math.isnan(v) or v <= 0:
                out.append(f"{name} must be > 0 or inf (got {v})")
        return out

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)


def default_nv_params() -> PhysicalParams:
    """Δ = 4 GHz, Ω = 110 MHz and the NV dipolar constant (≈ 52.04 MHz nm^3)."""
    return PhysicalParams(delta=4000.0, omega=110.0, j_dd=NV_J_DD)


def perturbative_j(params: PhysicalParams, n: int) -> float:
    """Second-order collective shift J = N Ω² / Δ."""
    if params.delta == 0:
        raise ZeroDivisionError("delta must be non-zero")
    return n * params.omega**2 / params.delta


def perturbative_ratio(params: PhysicalParams, n: int) -> float:
    """sqrt(N) Ω / Δ; perturbation theory breaks down as this approaches 1."""
    return math.sqrt(n) * params.omega / params.delta


@dataclass(frozen=True)
class HierarchyReport:
    scales: dict[str, float]
    ratios: dict[str, float]
    passed: dict[str, bool]
    perturbative_ratio: float
    perturbative_ok: bool
    ratio_threshold: float = 5.0
    perturbative_threshold: float = 0.5
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.passed.values()) and self.perturbative_ok


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return math.inf if a > 0 else 0.0
    return a / b


def check_hierarchy(
    params: PhysicalParams,
    n: int,
    v_dd_typ: float,
    ratio_threshold: float = 5.0,
    perturbative_threshold: float = 0.5,
) -> HierarchyReport:
    """Report on Δ ≫ J ≫ V_dd ≫ Ω_ext.

    A ratio "passes" when it is at least ``ratio_threshold``.  This only
    reports; nothing raises.
    """
    j = perturbative_j(params, n)
    scales = {"delta": params.delta, "j": j, "v_dd": v_dd_typ, "omega_ext": params.omega_ext}
    ratios = {
        "delta/j": _ratio(params.delta, j),
        "j/v_dd": _ratio(j, v_dd_typ),
        "v_dd/omega_ext": _ratio(v_dd_typ, params.omega_ext),
    }
    passed = {k: r >= ratio_threshold for k, r in ratios.items()}
    pr = perturbative_ratio(params, n)
    pert_ok = pr <= perturbative_threshold
    warnings = [f"{k} = {ratios[k]:.3g} < {ratio_threshold}" for k, ok in passed.items() if not ok]
    if not pert_ok:
        warnings.append(
            f"sqrt(N)*omega/delta = {pr:.3g} > {perturbative_threshold}: perturbation theory breaks down"
        )
    return HierarchyReport(
        scales=scales,
        ratios=ratios,
        passed=passed,
        perturbative_ratio=pr,
        perturbative_ok=pert_ok,
        ratio_threshold=ratio_threshold,
        perturbative_threshold=perturbative_threshold,
        warnings=warnings,
    )


def phase_cycles(freq_mhz: float, time_us: float) -> float:
    """Number of cycles accumulated at ``freq_mhz`` over ``time_us`` (MHz*us = 1)."""
    return freq_mhz * time_us
