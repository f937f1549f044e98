"""Least-squares and CUR estimators built on sketches, plus CUR column/row pre-selection."""

from dataclasses import dataclass
from logging import getLogger
from typing import NamedTuple, Optional

import numpy as np

from .errors import DebiasUndefined, InsufficientNonzero, NonFinite, ShapeMismatch
from .matcore import as_matrix, min_norm_solve, pseudoinverse, thin_factorize
from .sketching import (
    DEBIAS_FLOOR,
    RowSample,
    RowSamplingSketch,
    SamplingPlan,
    SketchOperator,
    SrhtSketch,
    srht_debias,
)

logger = getLogger(__name__)


@dataclass(frozen=True)
class OlsSolution:
    beta: np.ndarray
    sketch_descriptor: str = "exact"
    embedding_passed: Optional[bool] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.beta)):
            raise NonFinite(f"{self.sketch_descriptor} solution is not finite")


@dataclass(frozen=True)
class CurSolution:
    U: np.ndarray
    col_indices: tuple[int, ...] = ()
    row_indices: tuple[int, ...] = ()
    sketch_descriptors: tuple[str, str] = ("exact", "exact")

    def __post_init__(self):
        if not np.all(np.isfinite(self.U)):
            raise NonFinite("CUR core is not finite")
        for ids in (self.col_indices, self.row_indices):
            if len(set(ids)) != len(ids):
                raise ValueError(f"selected indices must be distinct, got {ids}")


class CurSelection(NamedTuple):
    C: np.ndarray
    R: np.ndarray
    col_ids: tuple[int, ...]
    row_ids: tuple[int, ...]


def _check_ols_shapes(X: np.ndarray, y: np.ndarray):
    if y.shape != (X.shape[0], 1):
        raise ShapeMismatch(f"y must be ({X.shape[0]}, 1) for X {X.shape}, got {y.shape}")


def ols_exact(X, y) -> OlsSolution:
    X, y = as_matrix(X, "X"), as_matrix(y, "y")
    _check_ols_shapes(X, y)
    return OlsSolution(beta=min_norm_solve(X, y))


def ols_subsampled(X, y, op: SketchOperator) -> OlsSolution:
    X, y = as_matrix(X, "X"), as_matrix(y, "y")
    _check_ols_shapes(X, y)
    return OlsSolution(beta=min_norm_solve(op.apply(X), op.apply(y)), sketch_descriptor=op.descriptor)


def ols_debiased(X, y, plan: SamplingPlan, sample: RowSample) -> OlsSolution:
    if sample.debias_weights is None:
        raise DebiasUndefined("ols_debiased needs a sample carrying debias weights")
    op = RowSamplingSketch(input_dim=plan.n, output_dim=sample.m, sample=sample, debiased=True,
                           label=plan.kind.value)
    return ols_subsampled(X, y, op)


def oblique_projection(X, op: SketchOperator) -> np.ndarray:
    """X (SX)^dagger S as a dense n x n matrix."""
    X = as_matrix(X, "X")
    f = thin_factorize(X)
    left = f.scaled_right_factor @ pseudoinverse(op.apply(X))
    return f.basis @ op.apply_transpose(left.T).T


def _draw_without_replacement(weights: np.ndarray, k: int, rng: np.random.Generator, what: str) -> np.ndarray:
    w = weights.astype(np.float64)
    if np.count_nonzero(w) < k:
        raise InsufficientNonzero(f"requested {k} {what} but only {np.count_nonzero(w)} are nonzero")
    picks = []
    for _ in range(k):
        i = int(rng.choice(w.shape[0], p=w / w.sum()))
        picks.append(i)
        w[i] = 0.0
    return np.array(picks, dtype=np.intp)


def select_columns_rows(X, c: int, r: int, rng: np.random.Generator) -> CurSelection:
    """Distinct columns by squared column norm, then distinct rows by squared row norm."""
    X = as_matrix(X, "X")
    n, p = X.shape
    if not 1 <= c <= p or not 1 <= r <= n:
        raise ValueError(f"need 1 <= c <= {p} and 1 <= r <= {n}, got c={c}, r={r}")
    col_ids = _draw_without_replacement(np.einsum("ij,ij->j", X, X), c, rng, "columns")
    row_ids = _draw_without_replacement(np.einsum("ij,ij->i", X, X), r, rng, "rows")
    return CurSelection(C=X[:, col_ids], R=X[row_ids, :], col_ids=tuple(col_ids.tolist()),
                        row_ids=tuple(row_ids.tolist()))


def _check_cur_shapes(X: np.ndarray, C: np.ndarray, R: np.ndarray):
    if C.shape[0] != X.shape[0] or R.shape[1] != X.shape[1]:
        raise ShapeMismatch(f"C {C.shape} and R {R.shape} do not conform to X {X.shape}")


def cur_exact(X, C, R, col_ids: tuple[int, ...] = (), row_ids: tuple[int, ...] = ()) -> CurSolution:
    X, C, R = as_matrix(X, "X"), as_matrix(C, "C"), as_matrix(R, "R")
    _check_cur_shapes(X, C, R)
    return CurSolution(U=pseudoinverse(C) @ X @ pseudoinverse(R), col_indices=col_ids, row_indices=row_ids)


def cur_fast(X, C, R, op_C: SketchOperator, op_R: SketchOperator,
             col_ids: tuple[int, ...] = (), row_ids: tuple[int, ...] = ()) -> CurSolution:
    X, C, R = as_matrix(X, "X"), as_matrix(C, "C"), as_matrix(R, "R")
    _check_cur_shapes(X, C, R)
    n, p = X.shape
    if op_C.input_dim != n or op_R.input_dim != p:
        raise ShapeMismatch(f"sketches act on {op_C.input_dim} and {op_R.input_dim} rows, need {n} and {p}")
    sc_c = op_C.apply(C)
    sxs = op_R.apply(op_C.apply(X).T).T
    r_sr = op_R.apply(R.T).T
    U = pseudoinverse(sc_c) @ sxs @ pseudoinverse(r_sr)
    return CurSolution(U=U, col_indices=col_ids, row_indices=row_ids,
                       sketch_descriptors=(op_C.descriptor, op_R.descriptor))


def cur_debiased(X, C, R, plan_C: SamplingPlan, sample_C: RowSample, plan_R: SamplingPlan, sample_R: RowSample,
                 col_ids: tuple[int, ...] = (), row_ids: tuple[int, ...] = ()) -> CurSolution:
    """Fast CUR with both row samplers debiased; plan_C is over rows of C, plan_R over rows of R^T."""
    for side, sample in (("C", sample_C), ("R", sample_R)):
        if sample.debias_weights is None:
            raise DebiasUndefined(f"cur_debiased needs debias weights on the {side} sample")
    op_C = RowSamplingSketch(input_dim=plan_C.n, output_dim=sample_C.m, sample=sample_C, debiased=True,
                             label=plan_C.kind.value)
    op_R = RowSamplingSketch(input_dim=plan_R.n, output_dim=sample_R.m, sample=sample_R, debiased=True,
                             label=plan_R.kind.value)
    return cur_fast(X, C, R, op_C, op_R, col_ids, row_ids)


def cur_srht(X, C, R, op_C: SrhtSketch, op_R: SrhtSketch, debiased: bool = False,
             floor: float = DEBIAS_FLOOR) -> CurSolution:
    """Fast CUR from independent SRHTs on both sides; `debiased` reweights the selected rows as DSRHT does."""
    X, C, R = as_matrix(X, "X"), as_matrix(C, "C"), as_matrix(R, "R")
    if debiased:
        op_C = srht_debias(op_C, C, floor)
        op_R = srht_debias(op_R, R.T, floor)
    return cur_fast(X, C, R, op_C, op_R)
