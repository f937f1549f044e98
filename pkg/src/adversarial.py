"""Lower-bound instance on which no scalar rescaling removes the bias of row-sampled least squares."""

import math
from dataclasses import dataclass
from logging import getLogger
from typing import Optional

import numpy as np

from .errors import InvalidDimensions, InvalidGrid
from .metrics import EstimatorKind, EstimatorSpec, TrialStats, ZetaPolicy, ZetaRule, monte_carlo_bias_variance
from .sketching import Family, SamplingPlan, SketchFamily, plan_from_probabilities

logger = getLogger(__name__)

GRID_STEP = 0.01


@dataclass(frozen=True)
class LowerBoundInstance:
    """X has orthonormal columns, column j carrying (1/2, sqrt(3)/2) on rows (2j, 2j+1).

    The plan is uniform on the first 2p rows, a 1/2-approximation of leverage sampling.
    """

    X: np.ndarray
    y: np.ndarray
    plan: SamplingPlan
    beta_star: np.ndarray
    k: int

    @property
    def p(self) -> int:
        return 4 * self.k

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def residual_norm2(self) -> float:
        resid = self.y - self.X @ self.beta_star
        return float(np.sum(resid * resid))

    def sketch_family(self) -> SketchFamily:
        return SketchFamily(Family.CUSTOM, probabilities=tuple(self.plan.probabilities.tolist()))


def lower_bound_instance(k: int, n: Optional[int] = None) -> LowerBoundInstance:
    if k < 1:
        raise InvalidDimensions(f"k must be >= 1, got {k}")
    p = 4 * k
    n = 2 * p if n is None else n
    if n < 2 * p:
        raise InvalidDimensions(f"n must be >= {2 * p} for k={k}, got {n}")

    X = np.zeros((n, p))
    cols = np.arange(p)
    X[2 * cols, cols] = 0.5
    X[2 * cols + 1, cols] = math.sqrt(3.0) / 2.0

    y = np.zeros((n, 1))
    # Rows 1..p alternate -1 (odd) / +1 (even) in 1-based numbering; rows p+1..2p are +1.
    y[:p:2] = -1.0
    y[1:p:2] = 1.0
    y[p:2 * p] = 1.0

    beta_star = X.T @ y
    probs = np.zeros(n)
    probs[:2 * p] = 1.0 / (2 * p)
    return LowerBoundInstance(X=X, y=y, plan=plan_from_probabilities(X, probs), beta_star=beta_star, k=k)


def coverage_zeta() -> ZetaPolicy:
    """Accept a draw only if every column pair of the instance was sampled."""
    return ZetaPolicy(enabled=True, rule=ZetaRule.COVERAGE)


def default_gamma_grid(step: float = GRID_STEP) -> np.ndarray:
    return np.linspace(0.0, 2.0, int(round(2.0 / step)) + 1)


@dataclass(frozen=True)
class ScalarFloor:
    min_over_gamma_bias: float
    argmin_gamma: float
    normalized: float
    closed_form_gamma: float
    closed_form_bias: float
    plain_bias: float
    stats: TrialStats


def _check_grid(grid: np.ndarray) -> float:
    if grid.size == 0:
        raise InvalidGrid("gamma grid is empty")
    if grid[0] > 0.0 or grid[-1] < 2.0:
        raise InvalidGrid(f"gamma grid must cover [0, 2], got [{grid[0]}, {grid[-1]}]")
    step = float(np.max(np.diff(grid))) if grid.size > 1 else math.inf
    if step > GRID_STEP + 1e-12:
        raise InvalidGrid(f"gamma grid step {step} exceeds {GRID_STEP}")
    return step


def scalar_debias_floor(instance: LowerBoundInstance, m: int, gamma_grid, trials: int, zeta: ZetaPolicy,
                        base_seed: int, threads: int = 1) -> ScalarFloor:
    """Smallest bias of gamma * E[beta_sketch] over a grid of scalars gamma."""
    grid = np.unique(np.asarray(gamma_grid, dtype=np.float64))
    step = _check_grid(grid)

    spec = EstimatorSpec(EstimatorKind.OLS_SUBSAMPLED, instance.sketch_family(), instance.X, m, y=instance.y)
    stats = monte_carlo_bias_variance(spec, trials, zeta, base_seed, threads=threads)

    # L(gamma b) = ||y||^2 - 2 gamma y^T X b + gamma^2 ||X b||^2
    fitted = instance.X @ stats.mean_estimate
    yy = float(np.sum(instance.y * instance.y))
    cross = float(np.sum(instance.y * fitted))
    quad = float(np.sum(fitted * fitted))
    biases = yy - 2.0 * grid * cross + grid**2 * quad - stats.normalizer
    best = int(np.argmin(biases))

    closed_gamma = cross / quad if quad > 0 else 0.0
    closed_bias = yy - 2.0 * closed_gamma * cross + closed_gamma**2 * quad - stats.normalizer
    if grid[0] <= closed_gamma <= grid[-1] and abs(grid[best] - closed_gamma) > step:
        logger.warning(f"grid minimizer {grid[best]:.4f} and closed form {closed_gamma:.4f} differ by more than "
                       f"one grid step")

    scale = m * m / (instance.p**2 * instance.residual_norm2)
    return ScalarFloor(
        min_over_gamma_bias=float(biases[best]),
        argmin_gamma=float(grid[best]),
        normalized=float(biases[best]) * scale,
        closed_form_gamma=closed_gamma,
        closed_form_bias=closed_bias,
        plain_bias=stats.bias,
        stats=stats,
    )
