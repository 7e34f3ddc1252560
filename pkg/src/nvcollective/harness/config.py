"""Experiment configuration: YAML schema, loading and validation."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..geometry import sample_ensemble, build_couplings, typical_vdd
from ..hilbert import DEFAULT_DIMENSION_CAP, predicted_dimension
from ..spectrum import DENSE_DIMENSION_CAP
from ..units import PhysicalParams, check_hierarchy

SCHEMA_VERSION = 1

Experiment = Literal[
    "spectrum", "sweep-omega", "rabi", "sweep-distance", "error-budget", "validate-truncation"
]
EXPERIMENTS: tuple[str, ...] = Experiment.__args__


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class ParamsOverride(BaseModel):
    model_config = ConfigDict(extra="forbid")

    delta: Optional[float] = None
    omega: Optional[float] = None
    j_dd: Optional[float] = None
    omega_ext: Optional[float] = None
    t2: Optional[float] = None
    t1_down: Optional[float] = None
    t1_up: Optional[float] = None

    def apply(self, base: PhysicalParams | None = None) -> PhysicalParams:
        base = base or PhysicalParams()
        changes = {k: v for k, v in self.model_dump().items() if v is not None}
        return base.with_(**changes)


class BudgetGrid(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: list[int] = Field(default_factory=lambda: [100])
    t_pi_us: list[float] = Field(default_factory=lambda: [600.0])
    t2_us: list[float] = Field(default_factory=lambda: [11000.0])
    n_swaps: list[int] = Field(default_factory=lambda: [4])
    mode: list[Literal["sqrtN", "N"]] = Field(default_factory=lambda: ["sqrtN"])
    epsilon: float = 1e-2


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    experiment: Experiment
    n_spins: int = 100
    diameter_nm: float = 20.0
    min_separation_nm: float = 1.0
    m_max: int = 2
    seeds: list[int] = Field(default_factory=lambda: [1])
    params: ParamsOverride = Field(default_factory=ParamsOverride)
    omegas_MHz: Optional[list[float]] = None
    R_nm: Optional[list[float]] = None
    qubit_direction: list[float] = Field(default_factory=lambda: [1.0, 0.0, 0.0])
    t_max_us: Optional[float] = None
    n_steps: int = 2000
    spectrum_window: Literal["full", "collective"] = "full"
    truncation_m_high: int = 3
    collective_floor: float = 10.0
    budget: BudgetGrid = Field(default_factory=BudgetGrid)
    output_path: str = "out"
    worker_count: Optional[int] = None
    fail_fast: bool = False

    def physical_params(self) -> PhysicalParams:
        return self.params.apply()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        """Hash of everything that determines results (not where they go or how fast)."""
        data = self.model_dump(mode="json")
        for k in ("output_path", "worker_count", "fail_fast"):
            data.pop(k)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _pydantic_messages(exc: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]


def parse_config(data: dict, experiment: str | None = None) -> ExperimentConfig:
    """Build a config from a mapping; raises :class:`ConfigError` listing every problem."""
    if not isinstance(data, dict):
        raise ConfigError(["config must be a mapping"])
    data = dict(data)
    if experiment is not None:
        if "experiment" in data and data["experiment"] != experiment:
            raise ConfigError(
                [f"experiment: command line says {experiment!r} but config says {data['experiment']!r}"])
        data["experiment"] = experiment
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_pydantic_messages(exc)) from None
    errors = semantic_errors(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    return parse_config(data or {}, experiment)


def ensemble_dimension(cfg: ExperimentConfig) -> int:
    if cfg.m_max > cfg.n_spins:
        return 2**cfg.n_spins
    return predicted_dimension(cfg.n_spins, cfg.m_max)


def combined_dimension(cfg: ExperimentConfig) -> int:
    """Ensemble plus qubit, the qubit outside the ensemble's excitation budget."""
    return 2 * ensemble_dimension(cfg)


def shared_budget_dimension(cfg: ExperimentConfig) -> int:
    """Ensemble plus qubit with one total excitation budget."""
    return predicted_dimension(cfg.n_spins + 1, min(cfg.m_max, cfg.n_spins + 1))


def semantic_errors(cfg: ExperimentConfig) -> list[str]:
    errs = []
    if cfg.schema_version != SCHEMA_VERSION:
        errs.append(f"schema_version: unsupported {cfg.schema_version} (expected {SCHEMA_VERSION})")
    if not cfg.seeds:
        errs.append("seeds: must be non-empty")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        errs.append("seeds: duplicates are not allowed")
    if cfg.n_spins < 1:
        errs.append("n_spins: must be >= 1")
    if cfg.diameter_nm <= 0:
        errs.append("diameter_nm: must be > 0")
    if cfg.min_separation_nm < 0:
        errs.append("min_separation_nm: must be >= 0")
    if cfg.m_max < 0:
        errs.append("m_max: must be >= 0")
    elif cfg.m_max > cfg.n_spins:
        errs.append(f"m_max: {cfg.m_max} exceeds n_spins {cfg.n_spins}")
    if cfg.collective_floor <= 0:
        errs.append("collective_floor: must be > 0")
    if cfg.n_steps < 3:
        errs.append("n_steps: must be >= 3")
    if cfg.worker_count is not None and cfg.worker_count < 1:
        errs.append("worker_count: must be >= 1")
    if len(cfg.qubit_direction) != 3 or not any(cfg.qubit_direction):
        errs.append("qubit_direction: must be a non-zero 3-vector")
    try:
        cfg.physical_params()
    except ValueError as exc:
        errs.append(f"params: {exc}")

    exp = cfg.experiment
    if exp == "sweep-omega":
        if not cfg.omegas_MHz:
            errs.append("omegas_MHz: required and non-empty for sweep-omega")
        elif any(o < 0 or not math.isfinite(o) for o in cfg.omegas_MHz):
            errs.append("omegas_MHz: values must be finite and >= 0")
    if exp in ("rabi", "sweep-distance"):
        if not cfg.R_nm:
            errs.append(f"R_nm: required for {exp}")
        elif any(r <= 0 for r in cfg.R_nm):
            errs.append("R_nm: distances must be > 0")
        elif exp == "sweep-distance" and max(cfg.R_nm) < 3 * min(cfg.R_nm):
            errs.append("R_nm: sweep-distance needs a span of at least a factor 3")
        if cfg.m_max < 1:
            errs.append("m_max: must be >= 1 for qubit experiments")
    if exp == "validate-truncation":
        if cfg.n_spins > 40:
            errs.append("n_spins: validate-truncation supports at most 40 spins")
        high = min(cfg.truncation_m_high, cfg.n_spins)
        if high <= cfg.m_max:
            errs.append("truncation_m_high: must exceed m_max")
        elif predicted_dimension(cfg.n_spins, high) > DEFAULT_DIMENSION_CAP:
            errs.append("truncation_m_high: basis exceeds the dimension cap")
    if exp == "error-budget":
        b = cfg.budget
        if not 0 < b.epsilon < 1:
            errs.append("budget.epsilon: must lie in (0, 1)")
        for name in ("t_pi_us", "t2_us"):
            if any(v <= 0 for v in getattr(b, name)):
                errs.append(f"budget.{name}: values must be > 0")
        if any(v < 1 for v in b.n) or any(v < 1 for v in b.n_swaps):
            errs.append("budget.n / budget.n_swaps: values must be >= 1")
    else:
        if cfg.m_max <= cfg.n_spins and cfg.m_max >= 0:
            dim = ensemble_dimension(cfg)
            if dim > DEFAULT_DIMENSION_CAP:
                errs.append(f"m_max: dimension {dim} exceeds cap {DEFAULT_DIMENSION_CAP}")
            elif exp != "validate-truncation" and dim > DENSE_DIMENSION_CAP:
                errs.append(
                    f"m_max: dimension {dim} exceeds the dense solver cap {DENSE_DIMENSION_CAP}")
    return errs


def _json_safe(d: dict) -> dict:
    # JSON has no infinity; a ratio over a zero scale is reported as null
    return {k: (v if math.isfinite(v) else None) for k, v in d.items()}


def validate(data: dict | ExperimentConfig, experiment: str | None = None,
             hierarchy_seed: int | None = None) -> dict:
    """Schema check, hierarchy report and dimension estimate; no heavy computation.

    The typical dipolar scale for the hierarchy report comes from sampling
    the first seed's geometry (positions only).
    """
    if isinstance(data, ExperimentConfig):
        data = data.model_dump(mode="json")
    try:
        cfg = parse_config(data, experiment)
    except ConfigError as exc:
        return {"valid": False, "errors": exc.errors}
    report = {
        "valid": True,
        "errors": [],
        "experiment": cfg.experiment,
        "config_hash": cfg.content_hash(),
    }
    if cfg.experiment != "error-budget":
        report["dimension"] = ensemble_dimension(cfg)
        if cfg.experiment in ("rabi", "sweep-distance"):
            report["combined_dimension"] = combined_dimension(cfg)
            report["shared_budget_dimension"] = shared_budget_dimension(cfg)
        params = cfg.physical_params()
        seed = cfg.seeds[0] if hierarchy_seed is None else hierarchy_seed
        try:
            geom = sample_ensemble(cfg.n_spins, cfg.diameter_nm, seed, cfg.min_separation_nm)
            vdd = typical_vdd(geom, build_couplings(geom, params))
        except RuntimeError as exc:
            return {"valid": False, "errors": [f"geometry: {exc}"]}
        h = check_hierarchy(params, cfg.n_spins, vdd)
        report["hierarchy"] = {
            "scales": _json_safe(h.scales),
            "ratios": _json_safe(h.ratios),
            "passed": h.passed,
            "perturbative_ratio": h.perturbative_ratio,
            "perturbative_ok": h.perturbative_ok,
            "warnings": h.warnings,
        }
    return report
