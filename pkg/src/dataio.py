"""Dense CSV ingestion, standardization and synthetic regression fixtures."""

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .errors import InvalidDimensions, ParseError, RaggedRows, ShapeMismatch, ZeroVariance
from .matcore import as_matrix

logger = getLogger(__name__)

SIGNIFICANT_DIGITS = 17


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: Optional[np.ndarray] = None
    name: str = "dataset"
    # Generator parameters and ground truth (beta0, noise_std) for synthetic data.
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.y is not None and self.y.shape[0] != self.X.shape[0]:
            raise ShapeMismatch(f"y has {self.y.shape[0]} rows but X has {self.X.shape[0]}")


class StandardizeTarget(str, Enum):
    COLUMNS = "columns"
    RESPONSE = "response"
    BOTH = "both"


def _parse_cell(cell: str, row: int, column: int) -> float:
    try:
        return float(cell)
    except ValueError as e:
        raise ParseError(f"non-numeric cell {cell!r} at row {row}, column {column}", row=row, column=column) from e


def load_matrix_csv(path: Union[str, Path], has_header: bool = False,
                    response_column: Optional[Union[int, str]] = None) -> Dataset:
    """Rows and columns in error messages are 1-based, counting the header line."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        rows = [r for r in csv.reader(handle) if r]
    header: list[str] = []
    if has_header and rows:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
    first_line = 2 if has_header else 1
    if not rows:
        raise RaggedRows(f"{path} has no data rows")

    width = len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise RaggedRows(f"{path}: row {i + first_line} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            values[i, j] = _parse_cell(cell.strip(), i + first_line, j + 1)

    y = None
    if response_column is not None:
        if isinstance(response_column, str):
            if response_column not in header:
                raise ValueError(f"response column {response_column!r} not in header {header}")
            col = header.index(response_column)
        else:
            col = int(response_column)
        if not 0 <= col < width:
            raise ValueError(f"response column {col} outside 0..{width - 1}")
        y = values[:, col:col + 1].copy()
        values = np.delete(values, col, axis=1)
    logger.info(f"Loaded {values.shape[0]}x{values.shape[1]} matrix from {path}")
    return Dataset(X=as_matrix(values, "X"), y=y, name=path.stem, provenance={"source": str(path)})


def write_matrix_csv(path: Union[str, Path], M, header: Optional[list[str]] = None):
    M = as_matrix(M, "M")
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if header:
            writer.writerow(header)
        for row in M:
            writer.writerow([f"{v:.{SIGNIFICANT_DIGITS}g}" for v in row])


def _standardize_columns(A: np.ndarray, label: str) -> np.ndarray:
    if A.shape[0] < 2:
        raise ZeroVariance(f"{label} needs at least two rows to standardize", column=0)
    std = A.std(axis=0, ddof=1)
    for j in np.flatnonzero(std == 0):
        raise ZeroVariance(f"{label} column {j} has zero variance", column=int(j))
    return (A - A.mean(axis=0)) / std


def standardize(ds: Dataset, target: Union[StandardizeTarget, str] = StandardizeTarget.BOTH) -> Dataset:
    """Zero mean and unit sample standard deviation for the targeted columns."""
    target = StandardizeTarget(target)
    X, y = ds.X, ds.y
    if target in (StandardizeTarget.COLUMNS, StandardizeTarget.BOTH):
        X = _standardize_columns(X, "X")
    if target in (StandardizeTarget.RESPONSE, StandardizeTarget.BOTH):
        if y is None:
            raise ValueError(f"dataset {ds.name} has no response to standardize")
        y = _standardize_columns(y, "y")
    return replace(ds, X=X, y=y, provenance={**ds.provenance, "standardized": target.value})


def quadratic_features(ds: Dataset) -> Dataset:
    """Append every squared column and every pairwise product x_i * x_j (i < j)."""
    X = ds.X
    p = X.shape[1]
    left, right = np.triu_indices(p, k=1)
    expanded = np.hstack([X, X * X, X[:, left] * X[:, right]])
    return replace(ds, X=expanded, provenance={**ds.provenance, "quadratic": True})


def _check_dims(n: int, p: int):
    if p < 1 or n < p:
        raise InvalidDimensions(f"synthetic data needs n >= p >= 1, got n={n}, p={p}")


def _with_response(X: np.ndarray, rng: np.random.Generator, name: str, params: dict[str, Any],
                   noise_std: float) -> Dataset:
    beta0 = rng.standard_normal((X.shape[1], 1))
    y = X @ beta0 + noise_std * rng.standard_normal((X.shape[0], 1))
    provenance = {"generator": name, **params, "noise_std": noise_std, "beta0": beta0.ravel().tolist()}
    return Dataset(X=X, y=y, name=name, provenance=provenance)


def synth_gaussian(n: int, p: int, rng: np.random.Generator, noise_std: float = 1.0) -> Dataset:
    _check_dims(n, p)
    return _with_response(rng.standard_normal((n, p)), rng, "gaussian", {"n": n, "p": p}, noise_std)


def synth_coherent(n: int, p: int, spike: int, rng: np.random.Generator, noise_std: float = 1.0) -> Dataset:
    """Gaussian rows with the first `spike` rows scaled by sqrt(n), concentrating leverage there."""
    _check_dims(n, p)
    if not 0 <= spike <= n:
        raise InvalidDimensions(f"spike must lie in [0, {n}], got {spike}")
    X = rng.standard_normal((n, p))
    X[:spike] *= np.sqrt(n)
    return _with_response(X, rng, "coherent", {"n": n, "p": p, "spike": spike}, noise_std)


def synth_powerlaw_rows(n: int, p: int, exponent: float, rng: np.random.Generator,
                        noise_std: float = 1.0) -> Dataset:
    """Gaussian rows with row i (1-based) scaled by i^-exponent."""
    _check_dims(n, p)
    X = rng.standard_normal((n, p))
    X *= (np.arange(1, n + 1, dtype=np.float64) ** -exponent)[:, None]
    return _with_response(X, rng, "powerlaw", {"n": n, "p": p, "exponent": exponent}, noise_std)
