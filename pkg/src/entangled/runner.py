"""Ensembles and (P_inv, C_connect) parameter sweeps."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .economy import run_simulation
from .kernel import build_kernel
from .params import EconomyParams, ParameterError
from .records import RunRecord
from .rng import derive_seed, hash_seed

log = logging.getLogger(__name__)

PAPER_P_INV = (0.1, 0.3, 0.5)
PAPER_C_CONNECT = (-10.0, 0.0, 10.0)
# Growth-rate statistics of a sweep skip the initial transient.
VOLATILITY_FROM = 1000


def _run_task(task):
    params, seed, kernel = task
    return run_simulation(params, seed, kernel if kernel is not None else "resample")


def _execute(tasks: list, parallelism: int) -> list[RunRecord]:
    if parallelism <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_task, tasks))


def ensemble_tasks(params: EconomyParams, n_runs: int, base_seed: int, cell_index: int = 0,
                   fixed_kernel: bool = False) -> list:
    if n_runs < 1:
        raise ParameterError("n_runs must be >= 1", "runs")
    kernel = build_kernel(hash_seed(base_seed, f"cell{cell_index}/kernel"), params) if fixed_kernel else None
    return [(params, derive_seed(base_seed, cell_index, k), kernel) for k in range(n_runs)]


def run_ensemble(params: EconomyParams, n_runs: int, base_seed: int, parallelism: int = 1,
                 fixed_kernel: bool = False, cell_index: int = 0) -> list[RunRecord]:
    """``n_runs`` independent runs; each draws its own kernel unless ``fixed_kernel``.

    Records come back in run order whatever the degree of parallelism.
    """
    return _execute(ensemble_tasks(params, n_runs, base_seed, cell_index, fixed_kernel), parallelism)


@dataclass
class SweepGrid:
    p_inv_values: Sequence[float] = PAPER_P_INV
    c_connect_values: Sequence[float] = PAPER_C_CONNECT
    runs_per_cell: int = 3
    base_seed: int = 0
    base_params: EconomyParams = field(default_factory=EconomyParams)
    fixed_kernel: bool = False
    volatility_from: int = VOLATILITY_FROM

    def __post_init__(self):
        if self.runs_per_cell < 1:
            raise ParameterError("runs_per_cell must be >= 1", "runs_per_cell")
        if not self.p_inv_values or not self.c_connect_values:
            raise ParameterError("sweep grid must be non-empty")
        for p in self.p_inv_values:
            if not 0 <= p <= 1:
                raise ParameterError(f"p_inv value {p} outside [0, 1]", "p_inv")

    def cells(self) -> list[tuple[float, float]]:
        return [(float(p), float(c)) for p in self.p_inv_values for c in self.c_connect_values]

    def to_dict(self) -> dict:
        return {"p_inv_values": list(self.p_inv_values), "c_connect_values": list(self.c_connect_values),
                "runs_per_cell": self.runs_per_cell, "base_seed": self.base_seed,
                "base_params": self.base_params.to_dict(), "fixed_kernel": self.fixed_kernel,
                "volatility_from": self.volatility_from}


@dataclass
class CellSummary:
    p_inv: float
    c_connect: float
    n_runs: int
    n_survivors: int
    mean_gdp_growth: float
    gdp_growth_variance: float
    mean_final_n: float
    mean_turnover: float


SUMMARY_COLUMNS = tuple(CellSummary.__dataclass_fields__)


@dataclass
class SweepSummary:
    grid: SweepGrid
    rows: list[CellSummary]
    records: list[list[RunRecord]] = field(default_factory=list, repr=False)

    def row(self, p_inv: float, c_connect: float) -> CellSummary:
        for r in self.rows:
            if math.isclose(r.p_inv, p_inv) and math.isclose(r.c_connect, c_connect):
                return r
        raise KeyError((p_inv, c_connect))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# grid_digest={grid_digest(self.grid)}\n")
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            for r in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])


def grid_digest(grid: SweepGrid) -> str:
    import hashlib
    return hashlib.sha256(json.dumps(grid.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def growth_stats(record: RunRecord, start: int = VOLATILITY_FROM) -> tuple[float, float]:
    """Mean and variance of the lag-100 GDP growth rate for iterations >= ``start``."""
    rates = metrics.growth_rate(record.gdp)
    iters = np.arange(len(rates)) + metrics.GROWTH_LAG + 1
    sel = rates[iters >= start]
    sel = sel[~np.isnan(sel)]
    if len(sel) < 2:
        return float("nan"), float("nan")
    return float(sel.mean()), float(sel.var(ddof=1))


def summarize_cell(p_inv: float, c_connect: float, records: list[RunRecord],
                   start: int = VOLATILITY_FROM) -> CellSummary:
    survivors, _ = metrics.survival_filter(records)
    nan = float("nan")
    if not survivors:
        return CellSummary(p_inv, c_connect, len(records), 0, nan, nan, nan, nan)
    stats = np.array([growth_stats(r, start) for r in survivors])
    turnover = [np.nanmean(t) if len(t) and not np.all(np.isnan(t)) else nan
                for t in map(metrics.turnover_per_year, survivors)]
    mean = lambda xs: float(np.nanmean(xs)) if not np.all(np.isnan(xs)) else nan  # noqa: E731
    return CellSummary(p_inv, c_connect, len(records), len(survivors),
                       mean(stats[:, 0]), mean(stats[:, 1]),
                       float(np.mean([r.n_companies[-1] for r in survivors])), mean(np.array(turnover)))


def run_sweep(grid: SweepGrid, parallelism: int = 1, keep_records: bool = True) -> SweepSummary:
    """All ``runs_per_cell`` runs of every (p_inv, c_connect) cell, aggregated over survivors.

    Cells without survivors are kept, with NaN statistics.
    """
    tasks = []
    cells = grid.cells()
    for index, (p_inv, c_connect) in enumerate(cells):
        params = grid.base_params.with_(p_inv=p_inv, c_connect=c_connect)
        tasks.extend(ensemble_tasks(params, grid.runs_per_cell, grid.base_seed, index, grid.fixed_kernel))
    records = _execute(tasks, parallelism)
    k = grid.runs_per_cell
    per_cell = [records[i * k:(i + 1) * k] for i in range(len(cells))]
    rows = [summarize_cell(p, c, recs, grid.volatility_from) for (p, c), recs in zip(cells, per_cell)]
    return SweepSummary(grid, rows, per_cell if keep_records else [])


def record_filename(record: RunRecord) -> str:
    return f"run-{record.params_digest}-s{record.seed}.npz"


def write_records(directory, records: Sequence[RunRecord], manifest: dict | None = None) -> Path:
    """Persist records plus a manifest sufficient to replay every run."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        name = record_filename(rec)
        rec.save(out / name)
        entries.append({"file": name, "seed": rec.seed, "params_digest": rec.params_digest,
                        "kernel_digest": rec.kernel_digest, "collapsed": rec.collapsed,
                        "final_iteration": rec.final_iteration, "params": rec.params.to_dict()})
    doc = dict(manifest or {})
    doc["runs"] = entries
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    return out / "manifest.json"


def read_records(directory) -> list[RunRecord]:
    path = Path(directory)
    manifest = path / "manifest.json"
    if not manifest.is_file():
        raise FileNotFoundError(f"no manifest.json in {path}")
    doc = json.loads(manifest.read_text())
    return [RunRecord.load(path / entry["file"]) for entry in doc["runs"]]
