"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..harness.config import Experiment, ParamsOverride

RunStatus = Literal["queued", "running", "done", "failed"]


class Health(BaseModel):
    status: str = "ok"
    version: str


class ValidateRequest(BaseModel):
    config: dict[str, Any]
    experiment: Optional[Experiment] = None


class HierarchySummary(BaseModel):
    scales: dict[str, Optional[float]]
    ratios: dict[str, Optional[float]]
    passed: dict[str, bool]
    perturbative_ratio: float
    perturbative_ok: bool
    warnings: list[str]


class ValidateResponse(BaseModel):
    valid: bool
    errors: list[str]
    experiment: Optional[str] = None
    config_hash: Optional[str] = None
    dimension: Optional[int] = None
    combined_dimension: Optional[int] = None
    shared_budget_dimension: Optional[int] = None
    hierarchy: Optional[HierarchySummary] = None


class RunRequest(BaseModel):
    config: dict[str, Any]
    experiment: Optional[Experiment] = None
    workers: Optional[int] = Field(default=None, ge=1)
    fail_fast: Optional[bool] = None


class RunInfo(BaseModel):
    run_id: str
    status: RunStatus
    experiment: str
    config_hash: str
    exit_code: Optional[int] = None
    files: dict[str, str] = Field(default_factory=dict)
    errors: list[dict[str, Any]] = Field(default_factory=list)
    detail: Optional[str] = None


class HierarchyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    params: ParamsOverride = Field(default_factory=ParamsOverride)
    n: int = Field(ge=1)
    v_dd_typ: float = Field(ge=0)
    ratio_threshold: float = 5.0


class ErrorBudgetRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    t_pi_us: float = Field(gt=0)
    t2_us: float = Field(gt=0)
    n_swaps: int = Field(default=4, ge=1)
    mode: Literal["sqrtN", "N"] = "sqrtN"
    epsilon: float = Field(default=1e-2, gt=0, lt=1)


class ErrorBudgetResponse(BaseModel):
    n: int
    p_dephase_leak: float
    p_flip_down: float
    depolarization_enhancement: int
    gate_error: float
    required_t2_us: float
    n_swaps: int
    mode: str
