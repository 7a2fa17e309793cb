"""Command-line entry points: simulate, analyze, benchmark.

``simulate`` writes a synthetic dataset plus its ground truth,
``analyze`` runs the full testing pipeline on a CSV file, and
``benchmark`` reproduces the FDR/power sweeps. Exit codes: 0 success,
1 usage problem, 2 data problem, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmark import (
    ExperimentGrid,
    MethodSpec,
    run_grid,
    write_agg_csv,
    write_raw_csv,
)
from .dataset import Dataset, format_float, write_dataset_csv, write_truth_csv
from .debias import PipelineConfig, run_pipeline
from .errors import (
    DataError,
    DeconfoundError,
    DegenerateProblemError,
    NumericError,
    ParameterError,
)
from .lasso import CvConfig
from .multiple_testing import data_driven_threshold, evaluate
from .simulate import GraphSpec, SimConfig, generate_dataset

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}

_METHOD_ALIASES = {
    "dc": "decorrelate-debias-dc",
    "trim": "decorrelate-debias-trim",
    "standard": "standard-debias",
    "decorrelate-debias-dc": "decorrelate-debias-dc",
    "decorrelate-debias-trim": "decorrelate-debias-trim",
    "standard-debias": "standard-debias",
}


@dataclass(frozen=True)
class LoadReport:
    """What the loader kept and what it discarded."""

    dataset: Dataset
    dropped_columns: tuple[tuple[str, str], ...]
    dropped_rows: int


def load_csv_dataset(path, response_column: str) -> LoadReport:
    """Read a rectangular numeric CSV with a header into a Dataset.

    Rows whose response cell is missing are dropped; all-zero and exact
    duplicate predictor columns are removed and reported. Any other
    non-numeric cell is an error.

    Raises
    ------
    DataError
        Missing file, missing response column, non-numeric cell (with its
        row and column), ragged rows, or fewer than 4 usable rows.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise DataError(f"response column {response_column!r} not in header")
        resp_idx = header.index(response_column)
        pred_names = [h for i, h in enumerate(header) if i != resp_idx]

        design_rows = []
        response = []
        dropped_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            resp_cell = row[resp_idx].strip()
            if resp_cell.lower() in _MISSING_TOKENS:
                dropped_rows += 1
                continue
            try:
                y_val = float(resp_cell)
            except ValueError:
                raise DataError(
                    f"non-numeric response {resp_cell!r} at row {lineno}"
                ) from None
            if not np.isfinite(y_val):
                dropped_rows += 1
                continue
            vals = []
            for i, cell in enumerate(row):
                if i == resp_idx:
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"non-numeric value {cell.strip()!r} at row {lineno}, "
                        f"column {header[i]!r}"
                    ) from None
            design_rows.append(vals)
            response.append(y_val)

    if len(design_rows) < 4:
        raise DataError(
            f"only {len(design_rows)} usable rows in {path}; need at least 4"
        )
    design = np.asarray(design_rows, dtype=float)
    response = np.asarray(response, dtype=float)
    if not np.all(np.isfinite(design)):
        bad = np.argwhere(~np.isfinite(design))[0]
        raise DataError(
            f"non-finite value in column {pred_names[bad[1]]!r} (data row {bad[0] + 1})"
        )

    dropped: list[tuple[str, str]] = []
    keep: list[int] = []
    seen: dict[bytes, str] = {}
    for j, name in enumerate(pred_names):
        col = design[:, j]
        if not np.any(col != 0.0):
            dropped.append((name, "all zeros"))
            continue
        key = col.tobytes()
        if key in seen:
            dropped.append((name, f"duplicate of {seen[key]}"))
            continue
        seen[key] = name
        keep.append(j)

    dataset = Dataset(
        design=design[:, keep],
        response=response,
        column_names=tuple(pred_names[j] for j in keep),
        response_name=response_column,
    )
    return LoadReport(
        dataset=dataset,
        dropped_columns=tuple(dropped),
        dropped_rows=dropped_rows,
    )


def standardize_columns(dataset: Dataset) -> Dataset:
    """Center and scale every predictor and the response to unit variance.

    Uses the n-1 divisor. Idempotent on already-standardized data.

    Raises
    ------
    DataError
        Naming any column with zero variance.
    """
    design = dataset.design
    response = dataset.response
    sds = np.std(design, axis=0, ddof=1)
    zero = np.nonzero(sds == 0.0)[0]
    if zero.size:
        raise DataError(
            f"column {dataset.column_names[zero[0]]!r} has zero variance"
        )
    y_sd = float(np.std(response, ddof=1))
    if y_sd == 0.0:
        raise DataError(f"response {dataset.response_name!r} has zero variance")
    return Dataset(
        design=(design - np.mean(design, axis=0)) / sds,
        response=(response - np.mean(response)) / y_sd,
        column_names=dataset.column_names,
        response_name=dataset.response_name,
    )


def load_truth_csv(path, column_names) -> np.ndarray:
    """Read a ground-truth CSV (coordinate, beta, omega_jj) and align the
    beta values to the given column order."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"truth file not found: {path}")
    table = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["coordinate", "beta"]:
            raise DataError(f"{path} does not look like a truth file")
        for row in reader:
            table[row[0].strip()] = float(row[1])
    missing = [name for name in column_names if name not in table]
    if missing:
        raise DataError(f"truth file lacks coordinates: {', '.join(missing[:5])}")
    return np.array([table[name] for name in column_names])


# ---------------------------------------------------------------------------
# Config files: flat key=value with one section per command.

_GRAPH_KEYS = {
    "graph": str,
    "edge_prob": float,
    "edge_weight": float,
    "band_weight1": float,
    "band_weight2": float,
}
_SIM_KEYS = {
    "n": int, "p": int, "q": int, "s0": int, "mu": float, "nu": float,
    "seed": int, **_GRAPH_KEYS,
}
_BENCH_KEYS = {
    "n": int, "p": int, "q": int, "s0": int, "mu": float, "nu": float,
    **_GRAPH_KEYS,
    "sweep": str, "values": str, "replications": int, "alpha": float,
    "methods": str, "base_seed": int, "rho": float, "kappa": float,
    "k_max": int,
}


def _read_section(path, section: str, schema: dict):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ParameterError(f"cannot parse config {path}: {exc}") from None
    if not parser.has_section(section):
        raise ParameterError(f"config {path} has no [{section}] section")
    values = {}
    for key, raw in parser.items(section):
        if key not in schema:
            raise ParameterError(f"unknown key {key!r} in [{section}]")
        caster = schema[key]
        try:
            values[key] = caster(raw)
        except ValueError:
            raise ParameterError(
                f"bad value {raw!r} for {key!r} in [{section}]"
            ) from None
    return values


def _require(values: dict, keys: tuple, section: str):
    missing = [k for k in keys if k not in values]
    if missing:
        raise ParameterError(
            f"[{section}] is missing required keys: {', '.join(missing)}"
        )


def _graph_from_config(values: dict) -> GraphSpec:
    kind = values.get("graph", "identity").strip().lower()
    aliases = {
        "identity": "identity",
        "erdos-renyi": "erdos-renyi",
        "erdos_renyi": "erdos-renyi",
        "er": "erdos-renyi",
        "banded": "banded",
    }
    if kind not in aliases:
        raise ParameterError(f"unknown graph {values.get('graph')!r}")
    return GraphSpec(
        kind=aliases[kind],
        edge_prob=values.get("edge_prob"),
        edge_weight=values.get("edge_weight", 0.3),
        band_weights=(
            values.get("band_weight1", 0.4),
            values.get("band_weight2", 0.2),
        ),
    )


def _sim_config_from_file(path) -> SimConfig:
    values = _read_section(path, "simulate", _SIM_KEYS)
    _require(values, ("n", "p", "q", "s0"), "simulate")
    return SimConfig(
        n=values["n"], p=values["p"], q=values["q"], s0=values["s0"],
        mu=values.get("mu", 3.0), nu=values.get("nu", 3.0),
        graph=_graph_from_config(values), seed=values.get("seed", 0),
    )


def _parse_methods(raw: str, rho: float, kappa: float, k_max: int):
    methods = []
    for token in raw.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in _METHOD_ALIASES:
            raise ParameterError(f"unknown method {token!r}")
        methods.append(
            MethodSpec(_METHOD_ALIASES[token], rho=rho, kappa=kappa, k_max=k_max)
        )
    if not methods:
        raise ParameterError("methods list is empty")
    return tuple(methods)


def _grid_from_file(path) -> ExperimentGrid:
    values = _read_section(path, "benchmark", _BENCH_KEYS)
    _require(values, ("n", "p", "q", "s0", "sweep", "values", "replications"),
             "benchmark")
    base = SimConfig(
        n=values["n"], p=values["p"], q=values["q"], s0=values["s0"],
        mu=values.get("mu", 3.0), nu=values.get("nu", 3.0),
        graph=_graph_from_config(values), seed=0,
    )
    try:
        sweep_values = tuple(int(v) for v in values["values"].split(","))
    except ValueError:
        raise ParameterError(
            f"values must be a comma list of integers, got {values['values']!r}"
        ) from None
    rho = values.get("rho", 0.3)
    kappa = values.get("kappa", 1.0)
    k_max = values.get("k_max", 20)
    methods = _parse_methods(
        values.get("methods", "dc,trim,standard"), rho, kappa, k_max
    )
    return ExperimentGrid(
        base=base,
        sweep_param=values["sweep"].strip(),
        sweep_values=sweep_values,
        replications=values["replications"],
        alpha=values.get("alpha", 0.1),
        methods=methods,
        base_seed=values.get("base_seed", 0),
    )


# ---------------------------------------------------------------------------
# Commands.

def cmd_simulate(args) -> int:
    config = _sim_config_from_file(args.config)
    out = Path(args.out)
    dataset, truth = generate_dataset(config)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(dataset, out / "dataset.csv")
    write_truth_csv(
        dataset.column_names, truth.beta, truth.omega_diag, out / "truth.csv"
    )
    print(
        f"simulated n={config.n} p={config.p} q={config.q} s0={config.s0} "
        f"graph={config.graph.kind} seed={config.seed}"
    )
    print(f"wrote {out / 'dataset.csv'} and {out / 'truth.csv'}")
    return 0


def cmd_analyze(args) -> int:
    report = load_csv_dataset(args.data, args.response)
    for name, reason in report.dropped_columns:
        print(f"dropped column {name}: {reason}")
    if report.dropped_rows:
        print(f"dropped {report.dropped_rows} rows with missing response")
    data = standardize_columns(report.dataset)

    method = _METHOD_ALIASES.get(args.method)
    if method is None:
        raise ParameterError(f"unknown method {args.method!r}")
    spec = MethodSpec(method, rho=args.rho, kappa=args.kappa, k_max=args.k_max,
                      q=args.q)
    inference = run_pipeline(
        data.design, data.response, spec.pipeline_config(args.seed)
    )
    decision = data_driven_threshold(inference.statistics, args.alpha)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rejected = set(decision.rejected.tolist())
    positive = set(decision.rejected_positive.tolist())
    with (out / "report.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate", "beta_bar", "tau", "T", "rejected", "sign"])
        for j, name in enumerate(data.column_names):
            in_rej = j in rejected
            sign = 0
            if in_rej:
                sign = 1 if j in positive else -1
            writer.writerow([
                name,
                format_float(inference.beta_bar[j]),
                format_float(inference.tau[j]),
                format_float(inference.statistics[j]),
                int(in_rej),
                sign,
            ])

    print(f"method={method} q_hat={inference.q_hat} "
          f"sigma_xi_hat={inference.sigma_xi_hat:.4g}")
    print(f"threshold t_hat={decision.t_hat:.4g} "
          f"fallback={decision.fallback_used} rejections={decision.rejected.size}")
    print(f"wrote {out / 'report.csv'}")

    if args.truth:
        beta = load_truth_csv(args.truth, data.column_names)
        metrics = evaluate(decision, beta)
        print(f"fdp={metrics.fdp:.4f} power={metrics.power:.4f} "
              f"sign_errors={metrics.sign_errors}")
    return 0


def cmd_benchmark(args) -> int:
    grid = _grid_from_file(args.config)
    out = Path(args.out)
    rows, aggregates = run_grid(grid, n_jobs=args.threads)
    out.mkdir(parents=True, exist_ok=True)
    write_raw_csv(rows, out / "results_raw.csv")
    write_agg_csv(aggregates, out / "results_agg.csv")
    failures = sum(1 for r in rows if not r.ok)
    print(f"ran {len(rows)} replications ({failures} failed)")
    for a in aggregates:
        print(f"{a['method']} {grid.sweep_param}={a['swept_value']}: "
              f"fdr={a['fdr']:.4f} power={a['power_mean']:.4f} "
              f"({a['reps_ok']} reps)")
    print(f"wrote {out / 'results_raw.csv'} and {out / 'results_agg.csv'}")
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deconfound", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--config", required=True, help="config file with [simulate]")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="run the testing pipeline on a CSV")
    p_an.add_argument("--data", required=True, help="input CSV file")
    p_an.add_argument("--response", required=True, help="response column name")
    p_an.add_argument("--truth", default=None, help="optional ground-truth CSV")
    p_an.add_argument("--out", required=True, help="output directory")
    p_an.add_argument("--method", default="dc",
                      choices=["dc", "trim", "standard"],
                      help="testing procedure (default dc)")
    p_an.add_argument("--alpha", type=float, default=0.1,
                      help="target FDR level (default 0.1)")
    p_an.add_argument("--q", type=int, default=None,
                      help="fixed number of confounders (default: estimate)")
    p_an.add_argument("--seed", type=int, default=0,
                      help="seed for cross-validation folds (default 0)")
    p_an.add_argument("--rho", type=float, default=0.3,
                      help="trim fraction (default 0.3)")
    p_an.add_argument("--kappa", type=float, default=1.0,
                      help="node-wise penalty multiplier (default 1.0)")
    p_an.add_argument("--k-max", type=int, default=20, dest="k_max",
                      help="bound for the factor-count estimate (default 20)")
    p_an.set_defaults(func=cmd_analyze)

    p_b = sub.add_parser("benchmark", help="run an FDR/power sweep")
    p_b.add_argument("--config", required=True, help="config file with [benchmark]")
    p_b.add_argument("--out", required=True, help="output directory")
    p_b.add_argument("--threads", type=int, default=1,
                     help="parallel replication workers (default 1)")
    p_b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, DegenerateProblemError, DeconfoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
