"""Cell-parallel experiment execution with deterministic CSV output.

Work is split into independent cells (one seed, or one seed and sweep
point).  Cells return plain row tuples; the parent process sorts them by
cell key and is the only writer, so output bytes do not depend on how many
workers ran or in which order they finished.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import os
import warnings
from concurrent.futures import FIRST_EXCEPTION, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..decoherence import BUDGET_COLUMNS, budget_row, error_budget
from ..dynamics import SWEEP_COLUMNS, TRACE_COLUMNS, rabi_experiment, ensemble_spectrum, sweep_distance
from ..geometry import NearFieldWarning, sample_ensemble
from ..hamiltonian import HamiltonianSpec, hamiltonian_terms
from ..spectrum import SPECTRUM_COLUMNS, _collective_window, diagonalize, spectrum_rows, truncation_check
from .config import ExperimentConfig

log = logging.getLogger(__name__)

WORKERS_ENV = "SIMNAME_WORKERS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SWEEP_OMEGA_COLUMNS = ("seed", "omega_MHz", "max_n_c", "e_c_MHz", "gap_MHz", "ok")
TRUNCATION_COLUMNS = ("seed", "n", "m_low", "m_high", "gap_low_MHz", "gap_high_MHz",
                      "n_c_low", "n_c_high", "e_c_change_rel_delta", "n_c_change_rel")
RABI_SUMMARY_COLUMNS = ("seed", "R_nm", "t_pi_us", "v_c_MHz", "n_c", "min_p_q", "half_gap_MHz")

# failures that belong to one cell; anything else is a bug and propagates
CELL_ERRORS = (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError)


class CellFailure(RuntimeError):
    def __init__(self, record: dict):
        super().__init__(record["error"])
        self.record = record


@dataclass(frozen=True)
class Cell:
    seed: int
    point: float | tuple | None = None

    @property
    def key(self):
        return (self.seed, () if self.point is None else self.point)

    def label(self) -> dict:
        return {"seed": self.seed, "point": self.point}


@dataclass
class CellResult:
    cell: Cell
    tables: dict[str, list[tuple]] = field(default_factory=dict)
    error: str | None = None
    error_type: str | None = None


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    files: dict[str, str]
    errors: list[dict]
    manifest: dict


def resolve_workers(flag: int | None, cfg: ExperimentConfig | None = None) -> int:
    """Flag, then environment, then the config, then 1."""
    if flag is not None:
        n = flag
    elif os.environ.get(WORKERS_ENV):
        n = int(os.environ[WORKERS_ENV])
    elif cfg is not None and cfg.worker_count is not None:
        n = cfg.worker_count
    else:
        n = 1
    if n < 1:
        raise ValueError("worker count must be >= 1")
    return n


# ---------------------------------------------------------------------------
# cells


def plan_cells(cfg: ExperimentConfig) -> list[Cell]:
    exp = cfg.experiment
    if exp == "sweep-omega":
        return [Cell(s, float(o)) for s in cfg.seeds for o in cfg.omegas_MHz]
    if exp == "error-budget":
        b = cfg.budget
        grid = itertools.product(b.n, b.t_pi_us, b.t2_us, b.n_swaps, b.mode)
        return [Cell(0, g) for g in grid]
    # the ensemble spectrum is shared by every distance, so one cell per seed
    return [Cell(s) for s in cfg.seeds]


def _geometry(cfg: ExperimentConfig, seed: int):
    return sample_ensemble(cfg.n_spins, cfg.diameter_nm, seed, cfg.min_separation_nm)


def _cell_spectrum(cfg, cell):
    params = cfg.physical_params()
    h0, x = hamiltonian_terms(HamiltonianSpec(_geometry(cfg, cell.seed), params, m_max=cfg.m_max))
    h = h0 + x.scaled(params.omega) if params.omega else h0
    if cfg.spectrum_window == "full":
        res = diagonalize(h)
    else:
        res = diagonalize(h, index_range=_collective_window(cfg.n_spins, h.dimension))
    return {"spectrum.csv": list(spectrum_rows(res, cell.seed, params.omega))}


def _cell_sweep_omega(cfg, cell):
    params = cfg.physical_params()
    h0, x = hamiltonian_terms(HamiltonianSpec(_geometry(cfg, cell.seed), params, m_max=cfg.m_max))
    om = cell.point
    h = h0 + x.scaled(om) if om else h0
    if cfg.spectrum_window == "full":
        res = diagonalize(h)
    else:
        res = diagonalize(h, index_range=_collective_window(cfg.n_spins, h.dimension))
    kc = res.collective
    row = (cell.seed, om, float(res.n_c[kc]), float(res.energies[kc]),
           float(res.energies[kc] - res.energies[res.vacuum]), "true")
    return {"sweep_omega.csv": [row]}


def _cell_rabi(cfg, cell):
    params = cfg.physical_params()
    geom = _geometry(cfg, cell.seed)
    spec = ensemble_spectrum(geom, params, cfg.m_max)
    traces, summary = [], []
    for r in sorted(cfg.R_nm):
        tr = rabi_experiment(geom, params, r, cfg.m_max, cfg.t_max_us, cfg.n_steps,
                             direction=tuple(cfg.qubit_direction), spectrum=spec,
                             floor=cfg.collective_floor)
        traces.extend((cell.seed, float(r), float(t), float(p)) for t, p in zip(tr.times, tr.p_q))
        summary.append((cell.seed, float(r), tr.t_pi, tr.v_c, tr.meta["n_c"],
                        float(tr.p_q.min()), tr.meta["half_gap"]))
    return {"rabi_traces.csv": traces, "rabi_summary.csv": summary}


def _cell_sweep_distance(cfg, cell):
    params = cfg.physical_params()
    geom = _geometry(cfg, cell.seed)
    traces = {}
    sw = sweep_distance(geom, params, cfg.R_nm, cfg.m_max, direction=tuple(cfg.qubit_direction),
                        n_steps=cfg.n_steps, traces=traces, floor=cfg.collective_floor)
    rows = [(cell.seed, r.distance, r.t_pi, r.v_c, r.n_c, r.effective_r, sw.slope) for r in sw.rows]
    tr_rows = [(cell.seed, float(r), float(t), float(p))
               for r in sorted(traces) for t, p in zip(traces[r].times, traces[r].p_q)]
    return {"sweep_distance.csv": rows, "sweep_distance_traces.csv": tr_rows}


def _cell_error_budget(cfg, cell):
    n, t_pi, t2, n_swaps, mode = cell.point
    b = error_budget(n, t_pi, t2, n_swaps, mode, cfg.budget.epsilon)
    return {"error_budget.csv": [budget_row(b)]}


def _cell_truncation(cfg, cell):
    params = cfg.physical_params()
    rep = truncation_check(_geometry(cfg, cell.seed), params, cfg.m_max, cfg.truncation_m_high)
    row = (cell.seed, rep.n, rep.m_low, rep.m_high, rep.e_c[0], rep.e_c[1], rep.n_c[0],
           rep.n_c[1], rep.e_c_change_rel_delta, rep.n_c_change_rel)
    return {"truncation.csv": [row]}


_CELL_FUNCS = {
    "spectrum": _cell_spectrum,
    "sweep-omega": _cell_sweep_omega,
    "rabi": _cell_rabi,
    "sweep-distance": _cell_sweep_distance,
    "error-budget": _cell_error_budget,
    "validate-truncation": _cell_truncation,
}

OUTPUT_COLUMNS = {
    "spectrum.csv": SPECTRUM_COLUMNS,
    "sweep_omega.csv": SWEEP_OMEGA_COLUMNS,
    "rabi_traces.csv": TRACE_COLUMNS,
    "rabi_summary.csv": RABI_SUMMARY_COLUMNS,
    "sweep_distance.csv": SWEEP_COLUMNS,
    "sweep_distance_traces.csv": TRACE_COLUMNS,
    "error_budget.csv": BUDGET_COLUMNS,
    "truncation.csv": TRUNCATION_COLUMNS,
}

EXPERIMENT_OUTPUTS = {
    "spectrum": ("spectrum.csv",),
    "sweep-omega": ("sweep_omega.csv",),
    "rabi": ("rabi_traces.csv", "rabi_summary.csv"),
    "sweep-distance": ("sweep_distance.csv", "sweep_distance_traces.csv"),
    "error-budget": ("error_budget.csv",),
    "validate-truncation": ("truncation.csv",),
}


def _failed_rows(cfg, cell) -> dict[str, list[tuple]]:
    # sweep-omega keeps a flagged row so the grid stays complete
    if cfg.experiment == "sweep-omega":
        return {"sweep_omega.csv": [(cell.seed, cell.point, None, None, None, "false")]}
    return {}


def run_cell(cfg: ExperimentConfig, cell: Cell) -> CellResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearFieldWarning)
        try:
            return CellResult(cell, _CELL_FUNCS[cfg.experiment](cfg, cell))
        except CELL_ERRORS as exc:
            return CellResult(cell, _failed_rows(cfg, cell), str(exc), type(exc).__name__)


def _run_cell_star(args):
    return run_cell(*args)


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path: Path, columns, rows) -> str:
    """Write one table and return its sha256."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _execute(cfg: ExperimentConfig, cells: list[Cell], workers: int, fail_fast: bool):
    results: list[CellResult] = []
    if workers == 1 or len(cells) == 1:
        for c in cells:
            r = run_cell(cfg, c)
            results.append(r)
            if fail_fast and r.error:
                break
        return results
    with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
        pending = {pool.submit(_run_cell_star, (cfg, c)) for c in cells}
        while pending:
            done, pending = wait(pending, return_when=FIRST_EXCEPTION)
            for f in done:
                r = f.result()
                results.append(r)
                if fail_fast and r.error:
                    for p in pending:
                        p.cancel()
                    pending = set()
                    break
    return results


def run(cfg: ExperimentConfig, workers: int | None = None, out_dir=None,
        fail_fast: bool | None = None) -> RunResult:
    """Execute ``cfg`` and write CSVs plus ``manifest.json`` into ``out_dir``.

    Exit code 0 on success (failed cells flagged), 3 if ``fail_fast`` is set
    and any cell failed; in that case ``errors.json`` holds the records and no
    CSVs are written.
    """
    workers = resolve_workers(workers, cfg)
    fail_fast = cfg.fail_fast if fail_fast is None else fail_fast
    out = Path(out_dir if out_dir is not None else cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)

    cells = plan_cells(cfg)
    results = sorted(_execute(cfg, cells, workers, fail_fast), key=lambda r: r.cell.key)
    errors = [{**r.cell.label(), "error_type": r.error_type, "error": r.error}
              for r in results if r.error]

    manifest = {
        "schema_version": cfg.schema_version,
        "experiment": cfg.experiment,
        "config_hash": cfg.content_hash(),
        "seeds": list(cfg.seeds),
        "library_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "config": json.loads(cfg.canonical_json()),
        "n_cells": len(cells),
        "failed_cells": len(errors),
    }
    files: dict[str, str] = {}
    if errors and fail_fast:
        (out / "errors.json").write_text(json.dumps(errors, indent=2, sort_keys=True) + "\n")
        manifest["files"] = files
        manifest["status"] = "failed"
        _write_manifest(out, manifest)
        return RunResult(EXIT_NUMERICAL, out, files, errors, manifest)

    for name in EXPERIMENT_OUTPUTS[cfg.experiment]:
        rows = [row for r in results for row in r.tables.get(name, [])]
        files[name] = write_csv(out / name, OUTPUT_COLUMNS[name], rows)
    if errors:
        (out / "errors.json").write_text(json.dumps(errors, indent=2, sort_keys=True) + "\n")
    manifest["files"] = files
    manifest["status"] = "flagged" if errors else "ok"
    _write_manifest(out, manifest)
    return RunResult(EXIT_OK, out, files, errors, manifest)


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
