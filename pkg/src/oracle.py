"""Exact expectations over every ordered tuple of sampled rows, for instances small enough to enumerate."""

from dataclasses import dataclass
from logging import getLogger
from typing import Iterator, Optional

import numpy as np

from .errors import BudgetExceeded, ShapeMismatch
from .matcore import as_matrix, batched_min_norm_solve, loss_ols, min_norm_solve, thin_factorize
from .sketching import SamplingPlan, check_debias_feasible, debias_factors
from .trials import tree_reduce

logger = getLogger(__name__)

BATCH_SIZE = 4096
COVERAGE_EVENT = "coverage"


@dataclass(frozen=True)
class EnumerationBudget:
    max_tuples: int = 10**6


@dataclass(frozen=True)
class ExactMoments:
    E_beta: np.ndarray
    exact_bias: float
    exact_variance: float
    total_weight: float


@dataclass(frozen=True)
class ExactProjectionMoments:
    E_P: np.ndarray
    bias_F2: float
    second_moment: float
    total_weight: float


def _row_weights(plan: SamplingPlan, m: int, debiased: bool) -> np.ndarray:
    """Combined per-row sketch weight for every row of the plan (0 off the support)."""
    support = plan.support
    weights = np.zeros(plan.n)
    weights[support] = 1.0 / np.sqrt(m * plan.probabilities[support])
    if debiased:
        check_debias_feasible(plan, m)
        weights[support] *= debias_factors(plan, m, plan.leverage_ratio(m)[support])
    return weights


def _tuples(plan: SamplingPlan, m: int, budget: EnumerationBudget) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (rows, probability) batches covering all ordered m-tuples over the support."""
    support = plan.support
    k = support.size
    total = k**m
    if total > budget.max_tuples:
        raise BudgetExceeded(f"{k}^{m} = {total} tuples exceeds the budget of {budget.max_tuples}")
    logger.debug(f"Enumerating {total} tuples over a support of {k} rows")
    place = k ** np.arange(m - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, BATCH_SIZE):
        codes = np.arange(start, min(start + BATCH_SIZE, total), dtype=np.int64)
        rows = support[(codes[:, None] // place) % k]
        yield rows, np.prod(plan.probabilities[rows], axis=1)


def _sketched(X: np.ndarray, rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return weights[rows][:, :, None] * X[rows]


def _covered(SX: np.ndarray) -> np.ndarray:
    return np.all(np.any(SX != 0, axis=1), axis=-1)


def _add(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def enumerate_expectation_beta(X, y, plan: SamplingPlan, m: int, debiased: bool = False,
                               budget: Optional[EnumerationBudget] = None,
                               event: Optional[str] = None) -> ExactMoments:
    """Exact E[beta] and excess losses of sketched least squares.

    With event="coverage" the expectation is conditional on the sketch touching
    every column of X; otherwise it is unconditional.
    """
    X, y = as_matrix(X, "X"), as_matrix(y, "y")
    if y.shape != (X.shape[0], 1):
        raise ShapeMismatch(f"y must be ({X.shape[0]}, 1), got {y.shape}")
    budget = budget or EnumerationBudget()
    weights = _row_weights(plan, m, debiased)
    normalizer = loss_ols(X, y, min_norm_solve(X, y))

    partials = []
    for rows, prob in _tuples(plan, m, budget):
        SX = _sketched(X, rows, weights)
        betas = batched_min_norm_solve(SX, _sketched(y, rows, weights))
        if event == COVERAGE_EVENT:
            prob = prob * _covered(SX)
        resid = y[None, :, 0] - np.einsum("np,bp->bn", X, betas[:, :, 0])
        losses = np.einsum("bn,bn->b", resid, resid)
        partials.append((float(prob.sum()), np.einsum("b,bpk->pk", prob, betas), float(prob @ losses)))

    total_weight, beta_sum, loss_sum = tree_reduce(partials, _add)
    if event is None and abs(total_weight - 1.0) > 1e-12:
        logger.warning(f"tuple weights sum to {total_weight!r}, not 1")
    E_beta = beta_sum / total_weight
    return ExactMoments(
        E_beta=E_beta,
        exact_bias=loss_ols(X, y, E_beta) - normalizer,
        exact_variance=loss_sum / total_weight - normalizer,
        total_weight=total_weight,
    )


def enumerate_expectation_projection(X, plan: SamplingPlan, m: int, debiased: bool = False,
                                     budget: Optional[EnumerationBudget] = None,
                                     event: Optional[str] = None) -> ExactProjectionMoments:
    X = as_matrix(X, "X")
    n = X.shape[0]
    budget = budget or EnumerationBudget()
    weights = _row_weights(plan, m, debiased)
    factor = thin_factorize(X)
    left = factor.scaled_right_factor
    target = factor.basis.T

    partials = []
    for rows, prob in _tuples(plan, m, budget):
        size = rows.shape[0]
        SX = _sketched(X, rows, weights)
        pinv = batched_min_norm_solve(SX, np.broadcast_to(np.eye(m), (size, m, m)))
        S = np.zeros((size, m, n))
        S[np.arange(size)[:, None], np.arange(m)[None, :], rows] = weights[rows]
        B = np.matmul(left @ pinv, S)
        if event == COVERAGE_EVENT:
            prob = prob * _covered(SX)
        diff = B - target
        partials.append((float(prob.sum()), np.einsum("b,bkn->kn", prob, B),
                         float(prob @ np.einsum("bkn,bkn->b", diff, diff))))

    total_weight, B_sum, second_sum = tree_reduce(partials, _add)
    E_B = B_sum / total_weight
    gap = E_B - target
    return ExactProjectionMoments(
        E_P=factor.basis @ E_B,
        bias_F2=float(np.sum(gap * gap)),
        second_moment=second_sum / total_weight,
        total_weight=total_weight,
    )
