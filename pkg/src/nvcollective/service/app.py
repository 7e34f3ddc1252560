"""FastAPI application wrapping the experiment runner.

Runs execute in a background thread, one directory per run.  Job state is
kept in memory; the files on disk are the durable result.
"""

from __future__ import annotations

import os
import tempfile
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse

from .. import __version__
from ..decoherence import error_budget
from ..harness.config import ConfigError, _json_safe, parse_config, validate
from ..harness.runner import run
from ..units import check_hierarchy
from .schemas import (
    ErrorBudgetRequest,
    ErrorBudgetResponse,
    Health,
    HierarchyRequest,
    HierarchySummary,
    RunInfo,
    RunRequest,
    ValidateRequest,
    ValidateResponse,
)

RUNS_DIR_ENV = "SIMNAME_RUNS_DIR"


def create_app(runs_dir: str | os.PathLike | None = None) -> FastAPI:
    root = Path(runs_dir or os.environ.get(RUNS_DIR_ENV) or tempfile.mkdtemp(prefix="simname-runs-"))
    root.mkdir(parents=True, exist_ok=True)
    jobs: dict[str, RunInfo] = {}
    lock = threading.Lock()

    app = FastAPI(title="simname", version=__version__)

    @app.get("/health", response_model=Health)
    def health():
        return Health(version=__version__)

    @app.post("/validate", response_model=ValidateResponse)
    def validate_config(req: ValidateRequest):
        return validate(req.config, req.experiment)

    def _work(run_id, cfg, workers, fail_fast):
        with lock:
            jobs[run_id].status = "running"
        try:
            res = run(cfg, workers=workers, out_dir=root / run_id, fail_fast=fail_fast)
            update = dict(status="done" if res.exit_code == 0 else "failed",
                          exit_code=res.exit_code, files=res.files, errors=res.errors)
        except Exception as exc:  # surfaced to the client, not swallowed
            update = dict(status="failed", exit_code=3, detail=f"{type(exc).__name__}: {exc}")
        with lock:
            jobs[run_id] = jobs[run_id].model_copy(update=update)

    @app.post("/runs", response_model=RunInfo, status_code=202)
    def submit(req: RunRequest):
        try:
            cfg = parse_config(req.config, req.experiment)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=exc.errors) from None
        run_id = uuid.uuid4().hex[:12]
        info = RunInfo(run_id=run_id, status="queued", experiment=cfg.experiment,
                       config_hash=cfg.content_hash())
        with lock:
            jobs[run_id] = info
        threading.Thread(target=_work, args=(run_id, cfg, req.workers, req.fail_fast),
                         daemon=True).start()
        return info

    def _job(run_id: str) -> RunInfo:
        with lock:
            info = jobs.get(run_id)
        if info is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        return info

    @app.get("/runs/{run_id}", response_model=RunInfo)
    def status(run_id: str):
        return _job(run_id)

    @app.get("/runs/{run_id}/files/{name}")
    def fetch(run_id: str, name: str):
        info = _job(run_id)
        allowed = set(info.files) | {"manifest.json", "errors.json"}
        path = root / run_id / name
        if name not in allowed or not path.is_file():
            raise HTTPException(status_code=404, detail=f"no file {name} for run {run_id}")
        media = "text/csv" if name.endswith(".csv") else "application/json"
        return FileResponse(path, media_type=media, filename=name)

    @app.post("/hierarchy", response_model=HierarchySummary)
    def hierarchy(req: HierarchyRequest):
        try:
            params = req.params.apply()
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=[str(exc)]) from None
        h = check_hierarchy(params, req.n, req.v_dd_typ, req.ratio_threshold)
        return HierarchySummary(scales=_json_safe(h.scales), ratios=_json_safe(h.ratios),
                                passed=h.passed, perturbative_ratio=h.perturbative_ratio,
                                perturbative_ok=h.perturbative_ok, warnings=h.warnings)

    @app.post("/error-budget", response_model=ErrorBudgetResponse)
    def budget(req: ErrorBudgetRequest):
        b = error_budget(req.n, req.t_pi_us, req.t2_us, req.n_swaps, req.mode, req.epsilon)
        return ErrorBudgetResponse(
            n=b.n, p_dephase_leak=b.p_dephase_leak, p_flip_down=b.p_flip_down,
            depolarization_enhancement=b.depolarization_enhancement, gate_error=b.gate_error,
            required_t2_us=b.required_t2, n_swaps=b.n_swaps, mode=b.enhancement_mode)

    return app
