"""In-memory dataset container and CSV serialization.

Numeric values are written with 17 significant digits so a write/read
round trip reproduces every float64 exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError

FLOAT_FMT = "%.17g"


def format_float(x: float) -> str:
    return FLOAT_FMT % x


@dataclass(frozen=True)
class Dataset:
    """A design matrix with named columns and a response vector."""

    design: np.ndarray
    response: np.ndarray
    column_names: tuple[str, ...] = ()
    response_name: str = "y"

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        response = np.asarray(self.response, dtype=float)
        if design.ndim != 2:
            raise ShapeError(f"design must be 2-d, got shape {design.shape}")
        if response.shape != (design.shape[0],):
            raise ShapeError(
                f"response shape {response.shape} does not match "
                f"{design.shape[0]} design rows"
            )
        names = self.column_names
        if not names:
            names = tuple(f"x{j + 1}" for j in range(design.shape[1]))
        elif len(names) != design.shape[1]:
            raise ShapeError(
                f"{len(names)} column names for {design.shape[1]} columns"
            )
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "column_names", tuple(names))

    @property
    def n_samples(self) -> int:
        return self.design.shape[0]

    @property
    def n_features(self) -> int:
        return self.design.shape[1]


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Write predictors and response as one CSV with a header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.column_names) + [dataset.response_name])
        for i in range(dataset.n_samples):
            row = [format_float(v) for v in dataset.design[i]]
            row.append(format_float(dataset.response[i]))
            writer.writerow(row)


def write_truth_csv(column_names, beta, omega_diag, path) -> None:
    """Write per-coordinate ground truth: coordinate, beta, omega_jj."""
    path = Path(path)
    beta = np.asarray(beta, dtype=float)
    omega_diag = np.asarray(omega_diag, dtype=float)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate", "beta", "omega_jj"])
        for name, b, w in zip(column_names, beta, omega_diag):
            writer.writerow([name, format_float(b), format_float(w)])
