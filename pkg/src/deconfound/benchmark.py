"""Experiment orchestration: methods x settings x replications.

A grid sweeps one simulation parameter over a list of values, runs every
method on every replication, and aggregates per-cell empirical FDR (the
mean of per-replication FDP) and mean power. Replication seeds are
base_seed + replication index, so results are independent of worker
count and execution order; failed replications are recorded and excluded
from the aggregates without aborting the grid.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from .dataset import format_float
from .debias import PipelineConfig, run_pipeline
from .errors import DeconfoundError, ParameterError
from .lasso import CvConfig
from .multiple_testing import data_driven_threshold, evaluate
from .simulate import SimConfig, generate_dataset

METHOD_NAMES = ("decorrelate-debias-dc", "decorrelate-debias-trim", "standard-debias")

RAW_HEADER = [
    "method", "swept_param", "swept_value", "rep", "seed", "fdp", "power",
    "q_hat", "t_hat", "fallback", "sigma_xi_hat", "wall_time_ms",
]
AGG_HEADER = [
    "method", "swept_value", "reps_ok", "fdr", "power_mean", "fdr_se", "power_se",
]


@dataclass(frozen=True)
class MethodSpec:
    """One named testing procedure plus its transform parameter overrides.

    "standard-debias" ignores confounding: it forces the identity initial
    transform and zero removed directions regardless of ``q``.
    """

    name: str
    rho: float = 0.3
    kappa: float = 1.0
    k_max: int = 20
    q: int | None = None

    def __post_init__(self):
        if self.name not in METHOD_NAMES:
            raise ParameterError(
                f"unknown method {self.name!r}; expected one of {METHOD_NAMES}"
            )

    def pipeline_config(self, seed: int, n_jobs: int = 1) -> PipelineConfig:
        cv = CvConfig(seed=seed)
        if self.name == "standard-debias":
            return PipelineConfig(
                initial_transform="identity", q=0, k_max=self.k_max,
                rho=self.rho, kappa=self.kappa, cv=cv, n_jobs=n_jobs,
            )
        initial = "decorrelate" if self.name.endswith("-dc") else "trim"
        return PipelineConfig(
            initial_transform=initial, q=self.q, k_max=self.k_max,
            rho=self.rho, kappa=self.kappa, cv=cv, n_jobs=n_jobs,
        )


@dataclass(frozen=True)
class ExperimentGrid:
    """A full sweep specification."""

    base: SimConfig
    sweep_param: str
    sweep_values: tuple[int, ...]
    replications: int
    alpha: float = 0.1
    methods: tuple[MethodSpec, ...] = (
        MethodSpec("decorrelate-debias-dc"),
        MethodSpec("decorrelate-debias-trim"),
        MethodSpec("standard-debias"),
    )
    base_seed: int = 0

    def __post_init__(self):
        if self.sweep_param not in ("p", "s0", "q"):
            raise ParameterError(
                f"sweep_param must be p, s0, or q, got {self.sweep_param!r}"
            )
        if len(self.sweep_values) == 0:
            raise ParameterError("sweep_values must be non-empty")
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha={self.alpha} must lie in (0, 1)")
        if len(self.methods) == 0:
            raise ParameterError("at least one method is required")

    def cell_config(self, value: int) -> SimConfig:
        return replace(self.base, **{self.sweep_param: int(value)})


@dataclass
class ResultRow:
    """One (method, setting, replication) outcome."""

    method: str
    swept_param: str
    swept_value: int
    rep: int
    seed: int
    fdp: float = math.nan
    power: float = math.nan
    q_hat: int = -1
    t_hat: float = math.nan
    fallback: bool = False
    sigma_xi_hat: float = math.nan
    wall_time_ms: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.error == ""


def run_replication(
    method: MethodSpec, config: SimConfig, alpha: float, seed: int,
    swept_param: str = "p", rep: int = 0,
) -> ResultRow:
    """Generate one dataset, run the pipeline and the test, score it.

    Pipeline failures are captured in the row's ``error`` field rather
    than raised, so grid runs never abort. BLAS threading is pinned to a
    single thread to keep results identical across worker pools.
    """
    row = ResultRow(
        method=method.name,
        swept_param=swept_param,
        swept_value=int(getattr(config, swept_param)),
        rep=rep,
        seed=seed,
    )
    start = time.perf_counter()
    try:
        with threadpool_limits(limits=1):
            sim_config = replace(config, seed=seed)
            dataset, truth = generate_dataset(sim_config)
            inference = run_pipeline(
                dataset.design, dataset.response, method.pipeline_config(seed)
            )
            decision = data_driven_threshold(inference.statistics, alpha)
            metrics = evaluate(decision, truth.beta)
        row.fdp = metrics.fdp
        row.power = metrics.power
        row.q_hat = inference.q_hat
        row.t_hat = decision.t_hat
        row.fallback = decision.fallback_used
        row.sigma_xi_hat = inference.sigma_xi_hat
    except DeconfoundError as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    row.wall_time_ms = (time.perf_counter() - start) * 1000.0
    return row


def run_grid(grid: ExperimentGrid, n_jobs: int = 1):
    """Run every (method, value, replication) cell of the grid.

    Returns
    -------
    (rows, aggregates)
        ``rows`` in deterministic (method, value, rep) order;
        ``aggregates`` holds one dict per (method, value) cell with the
        empirical FDR (mean FDP), mean power, their standard errors, and
        the count of successful replications.
    """
    tasks = [
        (method, grid.cell_config(value), grid.alpha, grid.base_seed + rep, value, rep)
        for method in grid.methods
        for value in grid.sweep_values
        for rep in range(grid.replications)
    ]
    rows = Parallel(n_jobs=n_jobs)(
        delayed(run_replication)(
            method, cfg, alpha, seed, grid.sweep_param, rep
        )
        for method, cfg, alpha, seed, _value, rep in tasks
    )
    aggregates = aggregate_rows(rows, grid)
    return rows, aggregates


def _se(values: np.ndarray) -> float:
    if values.size < 2:
        return math.nan
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def aggregate_rows(rows, grid: ExperimentGrid):
    """Per-cell means over the successful replications."""
    aggregates = []
    for method in grid.methods:
        for value in grid.sweep_values:
            cell = [
                r for r in rows
                if r.method == method.name and r.swept_value == int(value) and r.ok
            ]
            fdps = np.array([r.fdp for r in cell])
            powers = np.array([r.power for r in cell])
            aggregates.append({
                "method": method.name,
                "swept_value": int(value),
                "reps_ok": len(cell),
                "fdr": float(np.mean(fdps)) if cell else math.nan,
                "power_mean": float(np.mean(powers)) if cell else math.nan,
                "fdr_se": _se(fdps),
                "power_se": _se(powers),
            })
    return aggregates


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "" if math.isnan(value) else format_float(value)
    return str(value)


def write_raw_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_HEADER)
        for r in rows:
            writer.writerow([
                r.method, r.swept_param, r.swept_value, r.rep, r.seed,
                _cell(r.fdp), _cell(r.power), r.q_hat, _cell(r.t_hat),
                _cell(r.fallback), _cell(r.sigma_xi_hat), _cell(r.wall_time_ms),
            ])


def write_agg_csv(aggregates, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGG_HEADER)
        for a in aggregates:
            writer.writerow([
                a["method"], a["swept_value"], a["reps_ok"], _cell(a["fdr"]),
                _cell(a["power_mean"]), _cell(a["fdr_se"]), _cell(a["power_se"]),
            ])
