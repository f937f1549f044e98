"""Monte-Carlo bias/variance under a conditioning event, and the closed-form predictions they are compared to.

Bias and variance follow the excess-loss convention: for estimates b over
accepted trials, bias = L(E[b]) - L(b_exact) and variance = E[L(b)] - L(b_exact),
where L is the least-squares loss (OLS) or the CUR reconstruction loss.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from logging import getLogger
from typing import Callable, Optional

import numpy as np

from .errors import AllTrialsRejected, InvariantViolation, ShapeMismatch, Undefined, UndefinedTerm
from .estimators import cur_exact, cur_fast, cur_srht
from .matcore import ThinFactorization, as_matrix, loss_cur, loss_ols, min_norm_solve, pseudoinverse, thin_factorize
from .sketching import (Family, SamplingPlan, SketchFamily, SketchOperator, check_debias_feasible,
                        subspace_embedding_check)
from .trials import TrialAccumulator, TrialOutcome, auxiliary_rng, run_trials

logger = getLogger(__name__)

DEFAULT_BOOTSTRAP = 200
BOOTSTRAP_KEY = 0
REJECTION_WARN_RATE = 0.5


def zeta_epsilon(p: int, theta_max: float, m: int, delta: float = 0.01) -> float:
    """sqrt(3 p theta_max log(2p/delta) / m), the embedding tolerance that holds with probability 1 - delta."""
    if p < 1 or m < 1:
        raise ValueError(f"zeta_epsilon needs p >= 1 and m >= 1, got p={p}, m={m}")
    return math.sqrt(3.0 * p * theta_max * math.log(2.0 * p / delta) / m)


class ZetaRule(str, Enum):
    EMBEDDING = "embedding"
    # Every column of the data is touched by the sketch.
    COVERAGE = "coverage"


@dataclass(frozen=True)
class ZetaPolicy:
    """Per-trial acceptance filter; eps=None resolves automatically from the plan."""

    enabled: bool = True
    eps: Optional[float] = None
    basis: str = "X"
    delta: float = 0.01
    rule: ZetaRule = ZetaRule.EMBEDDING

    def __post_init__(self):
        object.__setattr__(self, "rule", ZetaRule(self.rule))
        if self.basis not in ("X", "C", "Rt", "CR"):
            raise ValueError(f"zeta basis must be one of X, C, Rt, CR; got {self.basis}")
        if self.enabled and self.eps is not None and self.eps <= 0:
            raise ValueError(f"zeta eps must be positive when enabled, got {self.eps}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"zeta delta must lie in (0, 1), got {self.delta}")

    @classmethod
    def disabled(cls) -> "ZetaPolicy":
        return cls(enabled=False)

    def resolve_eps(self, rank: int, theta_max: float, m: int) -> float:
        if self.eps is not None:
            return self.eps
        return zeta_epsilon(max(rank, 1), theta_max, m, self.delta)

    def accepts(self, basis: ThinFactorization, op: SketchOperator, theta_max: float, A: np.ndarray) -> bool:
        if not self.enabled:
            return True
        if self.rule == ZetaRule.COVERAGE:
            return bool(np.all(np.any(op.apply(A) != 0, axis=0)))
        return subspace_embedding_check(basis, op, self.resolve_eps(basis.rank, theta_max, op.output_dim))


class EstimatorKind(str, Enum):
    OLS_SUBSAMPLED = "ols_subsampled"
    OLS_DEBIASED = "ols_debiased"
    OLS_SRHT = "ols_srht"
    CUR_FAST = "cur_fast"
    CUR_DEBIASED = "cur_debiased"


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run per trial and on what inputs.

    For CUR kinds, m is the row-sketch size for C and m_r the size for R^T.
    """

    kind: EstimatorKind
    family: SketchFamily
    X: np.ndarray
    m: int
    y: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    m_r: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.is_cur:
            if self.C is None or self.R is None or self.m_r is None:
                raise ValueError(f"{self.kind.value} needs C, R and m_r")
        elif self.y is None:
            raise ValueError(f"{self.kind.value} needs y")
        if self.kind == EstimatorKind.OLS_SRHT and self.family.family.value not in ("srht", "dsrht"):
            raise ValueError(f"ols_srht needs an srht or dsrht family, got {self.family.label}")
        if self.debiased and not self.family.supports_debias:
            raise ValueError(f"{self.family.label} sketches have no debiased variant")

    @property
    def is_cur(self) -> bool:
        return self.kind in (EstimatorKind.CUR_FAST, EstimatorKind.CUR_DEBIASED)

    @property
    def debiased(self) -> bool:
        if self.kind in (EstimatorKind.OLS_DEBIASED, EstimatorKind.CUR_DEBIASED):
            return True
        return self.kind == EstimatorKind.OLS_SRHT and self.family.family.value == "dsrht"


@dataclass
class TrialStats:
    accepted: int
    rejected: int
    mean_estimate: np.ndarray
    mean_loss: float
    bias: float
    variance: float
    bias_stderr: float
    variance_stderr: float
    normalizer: float
    estimates: np.ndarray = field(default_factory=lambda: np.empty((0, 0)), repr=False)

    @property
    def bias_rel(self) -> float:
        return self.bias / self.normalizer if self.normalizer > 0 else math.nan

    @property
    def variance_rel(self) -> float:
        return self.variance / self.normalizer if self.normalizer > 0 else math.nan

    @property
    def rejection_rate(self) -> float:
        return self.rejected / (self.accepted + self.rejected)


class _OlsTrial:
    """One subsampled least-squares solve per call."""

    def __init__(self, spec: EstimatorSpec, zeta: ZetaPolicy):
        self.spec = spec
        self.zeta = zeta
        self.X = as_matrix(spec.X, "X")
        self.y = as_matrix(spec.y, "y")
        if self.y.shape != (self.X.shape[0], 1):
            raise ShapeMismatch(f"y must be ({self.X.shape[0]}, 1), got {self.y.shape}")
        self.factor = thin_factorize(self.X)
        self.exact = min_norm_solve(self.X, self.y)
        self.normalizer = loss_ols(self.X, self.y, self.exact)
        self.tolerance = 1e-9 * max(self.normalizer, float(np.sum(self.y * self.y)))
        self.plan = spec.family.plan_for(self.X)
        self.theta_max = self.plan.theta_max if self.plan is not None else 1.0
        if spec.debiased and self.plan is not None:
            check_debias_feasible(self.plan, spec.m)

    def loss(self, estimate: np.ndarray) -> float:
        return loss_ols(self.X, self.y, estimate.reshape(-1, 1))

    def shape(self) -> tuple[int, int]:
        return self.exact.shape

    def __call__(self, rng: np.random.Generator) -> TrialOutcome:
        family = self.spec.family
        op = family.draw(self.X.shape[0], self.spec.m, rng, self.plan)
        if not self.zeta.accepts(self.factor, op, self.theta_max, self.X):
            return TrialOutcome(accepted=False)
        if self.spec.debiased:
            op = family.debias(op, self.X, self.plan)
        beta = min_norm_solve(op.apply(self.X), op.apply(self.y))
        loss = loss_ols(self.X, self.y, beta)
        if loss - self.normalizer < -self.tolerance:
            raise InvariantViolation(f"trial loss {loss!r} below the exact optimum {self.normalizer!r}")
        return TrialOutcome(accepted=True, estimate=beta, loss=loss)


class _CurTrial:
    """One fast CUR core per call; C is sketched over rows of X, R over columns."""

    def __init__(self, spec: EstimatorSpec, zeta: ZetaPolicy):
        self.spec = spec
        self.zeta = zeta
        self.X = as_matrix(spec.X, "X")
        self.C = as_matrix(spec.C, "C")
        self.R = as_matrix(spec.R, "R")
        self.factor_C = thin_factorize(self.C)
        self.factor_R = thin_factorize(self.R.T)
        self.exact = cur_exact(self.X, self.C, self.R).U
        self.normalizer = loss_cur(self.X, self.C, self.exact, self.R)
        self.tolerance = 1e-9 * max(self.normalizer, float(np.sum(self.X * self.X)))
        self.plan_C = spec.family.plan_for(self.C)
        self.plan_R = spec.family.plan_for(self.R.T)
        self.theta_C = self.plan_C.theta_max if self.plan_C is not None else 1.0
        self.theta_R = self.plan_R.theta_max if self.plan_R is not None else 1.0
        if spec.debiased and self.plan_C is not None:
            check_debias_feasible(self.plan_C, spec.m)
            check_debias_feasible(self.plan_R, spec.m_r)

    def loss(self, estimate: np.ndarray) -> float:
        return loss_cur(self.X, self.C, estimate.reshape(self.exact.shape), self.R)

    def shape(self) -> tuple[int, int]:
        return self.exact.shape

    def __call__(self, rng: np.random.Generator) -> TrialOutcome:
        family = self.spec.family
        n, p = self.X.shape
        op_C = family.draw(n, self.spec.m, rng, self.plan_C)
        op_R = family.draw(p, self.spec.m_r, rng, self.plan_R)
        basis = self.zeta.basis
        if basis in ("C", "CR", "X") and not self.zeta.accepts(self.factor_C, op_C, self.theta_C, self.C):
            return TrialOutcome(accepted=False)
        if basis in ("Rt", "CR", "X") and not self.zeta.accepts(self.factor_R, op_R, self.theta_R, self.R.T):
            return TrialOutcome(accepted=False)
        if family.family in (Family.SRHT, Family.DSRHT):
            U = cur_srht(self.X, self.C, self.R, op_C, op_R, debiased=self.spec.debiased).U
        else:
            if self.spec.debiased:
                op_C = family.debias(op_C, self.C, self.plan_C)
                op_R = family.debias(op_R, self.R.T, self.plan_R)
            U = cur_fast(self.X, self.C, self.R, op_C, op_R).U
        loss = loss_cur(self.X, self.C, U, self.R)
        if loss - self.normalizer < -self.tolerance:
            raise InvariantViolation(f"trial loss {loss!r} below the exact CUR optimum {self.normalizer!r}")
        return TrialOutcome(accepted=True, estimate=U, loss=loss)


def _bootstrap_bias_stderr(estimates: np.ndarray, loss: Callable[[np.ndarray], float], normalizer: float,
                           resamples: int, rng: np.random.Generator) -> float:
    count = estimates.shape[0]
    if resamples < 2 or count < 2:
        return math.nan
    biases = np.empty(resamples)
    for b in range(resamples):
        weights = np.bincount(rng.integers(0, count, size=count), minlength=count)
        biases[b] = loss(weights @ estimates / count) - normalizer
    return float(np.std(biases, ddof=1))


def _loss_stderr(acc: TrialAccumulator) -> float:
    if acc.accepted < 2:
        return math.nan
    mean = acc.loss_sum / acc.accepted
    var = (acc.loss_sq_sum - acc.accepted * mean * mean) / (acc.accepted - 1)
    return math.sqrt(max(var, 0.0) / acc.accepted)


def _warn_on_rejections(acc: TrialAccumulator, what: str):
    total = acc.accepted + acc.rejected
    if acc.accepted == 0:
        raise AllTrialsRejected(f"all {total} trials of {what} were rejected by the conditioning event")
    if acc.rejected / total > REJECTION_WARN_RATE:
        logger.warning(f"{what}: {acc.rejected}/{total} trials rejected; conditioned results may not be "
                       f"comparable to unconditional ones")


def monte_carlo_bias_variance(spec: EstimatorSpec, trials: int, zeta: ZetaPolicy, base_seed: int,
                              threads: int = 1, bootstrap: int = DEFAULT_BOOTSTRAP) -> TrialStats:
    runner = _CurTrial(spec, zeta) if spec.is_cur else _OlsTrial(spec, zeta)
    what = f"{spec.kind.value}[{spec.family.label}, m={spec.m}]"
    logger.debug(f"Running {trials} trials of {what}")
    acc = run_trials(runner, trials, base_seed, threads=threads)
    _warn_on_rejections(acc, what)

    mean_estimate = acc.mean_estimate.reshape(runner.shape())
    mean_loss = acc.loss_sum / acc.accepted
    bias = runner.loss(mean_estimate) - runner.normalizer
    variance = mean_loss - runner.normalizer
    estimates = acc.estimate_matrix
    bias_stderr = _bootstrap_bias_stderr(estimates, runner.loss, runner.normalizer, bootstrap,
                                         auxiliary_rng(base_seed, BOOTSTRAP_KEY))
    variance_stderr = _loss_stderr(acc)

    slack = 3.0 * math.hypot(np.nan_to_num(bias_stderr), np.nan_to_num(variance_stderr))
    if bias > variance + slack:
        logger.warning(f"{what}: bias {bias:.4g} exceeds variance {variance:.4g} beyond 3 standard errors")

    return TrialStats(
        accepted=acc.accepted,
        rejected=acc.rejected,
        mean_estimate=mean_estimate,
        mean_loss=mean_loss,
        bias=bias,
        variance=variance,
        bias_stderr=bias_stderr,
        variance_stderr=variance_stderr,
        normalizer=runner.normalizer,
        estimates=estimates,
    )


def residual_vector(X, y) -> np.ndarray:
    X, y = as_matrix(X, "X"), as_matrix(y, "y")
    if y.shape != (X.shape[0], 1):
        raise ShapeMismatch(f"y must be ({X.shape[0]}, 1), got {y.shape}")
    return y - X @ min_norm_solve(X, y)


def _finite_ratio(plan: SamplingPlan, m: int) -> np.ndarray:
    ratio = plan.leverage_ratio(m)
    if np.any(np.isinf(ratio)):
        rows = np.flatnonzero(np.isinf(ratio))
        raise UndefinedTerm(f"rows {rows[:5].tolist()} have positive leverage but zero sampling probability")
    return ratio


def delta_X(X, plan: SamplingPlan, m: int, r) -> float:
    """r^T diag(l_i / (m pi_i)) r, the leading variance term of sketched least squares."""
    X = as_matrix(X, "X")
    r = as_matrix(r, "r")
    if plan.n != X.shape[0] or r.shape != (X.shape[0], 1):
        raise ShapeMismatch(f"plan over {plan.n} rows and r {r.shape} do not match X {X.shape}")
    return float(np.sum(r[:, 0] ** 2 * _finite_ratio(plan, m)))


def gaussian_variance_prediction(p: int, m: int, residual_norm2: float) -> float:
    """p/(m-p-1) ||r||^2, the exact variance of Gaussian-sketched least squares."""
    if m <= p + 1:
        raise Undefined(f"Gaussian variance prediction needs m > p + 1, got m={m}, p={p}")
    return p / (m - p - 1) * residual_norm2


@dataclass(frozen=True)
class CurDelta:
    delta_1: float
    delta_2: float

    @property
    def delta_cur(self) -> float:
        return (self.delta_1 + self.delta_2) ** 2

    def eps_l_term(self, eps_times_loss: float) -> float:
        return math.sqrt(eps_times_loss) * (self.delta_1 + self.delta_2)

    def total(self, eps_times_loss: float = 0.0) -> float:
        return self.delta_cur + self.eps_l_term(eps_times_loss)


def delta_cur(X, C, R, plan_C: SamplingPlan, plan_R: SamplingPlan, m_c: int, m_r: int) -> CurDelta:
    X, C, R = as_matrix(X, "X"), as_matrix(C, "C"), as_matrix(R, "R")
    if plan_C.n != X.shape[0] or plan_R.n != X.shape[1]:
        raise ShapeMismatch(f"plans over {plan_C.n} and {plan_R.n} rows do not match X {X.shape}")
    W = thin_factorize(C).basis
    V = thin_factorize(R.T).basis
    B1 = X - W @ (W.T @ X)
    B2 = X.T - V @ (V.T @ X.T)
    d1 = math.sqrt(float(np.sum(_finite_ratio(plan_C, m_c) * np.einsum("ij,ij->i", B1, B1))))
    d2 = math.sqrt(float(np.sum(_finite_ratio(plan_R, m_r) * np.einsum("ij,ij->i", B2, B2))))
    return CurDelta(delta_1=d1, delta_2=d2)


@dataclass(frozen=True)
class ProjectionMoments:
    bias_F2: float
    second_moment: float
    predicted_trace: float
    perp_F2: float
    accepted: int
    rejected: int
    noise_floor: float


def projection_moments(X, family: SketchFamily, m: int, trials: int, zeta: ZetaPolicy, base_seed: int,
                       debiased: bool = False, threads: int = 1) -> ProjectionMoments:
    """First and second moments of the (optionally debiased) oblique projection around P = X X^dagger.

    Works in the reduced coordinates P_sketch = U B with B = (Sigma V^T)(SX)^dagger S,
    so ||P_sketch - P||_F = ||B - U^T||_F and no n x n matrix is formed per trial.
    """
    X = as_matrix(X, "X")
    n = X.shape[0]
    factor = thin_factorize(X)
    left = factor.scaled_right_factor
    target = factor.basis.T
    plan = family.plan_for(X)
    theta_max = plan.theta_max if plan is not None else 1.0
    if debiased and plan is not None:
        check_debias_feasible(plan, m)

    def trial(rng: np.random.Generator) -> TrialOutcome:
        op = family.draw(n, m, rng, plan)
        if not zeta.accepts(factor, op, theta_max, X):
            return TrialOutcome(accepted=False)
        if debiased:
            op = family.debias(op, X, plan)
        B = op.apply_transpose((left @ pseudoinverse(op.apply(X))).T).T
        diff = B - target
        return TrialOutcome(accepted=True, estimate=B, loss=float(np.sum(diff * diff)))

    acc = run_trials(trial, trials, base_seed, threads=threads, keep_estimates=False)
    _warn_on_rejections(acc, f"projection[{family.label}, m={m}]")
    diff = acc.mean_estimate.reshape(target.shape) - target
    bias_F2 = float(np.sum(diff * diff))
    second = acc.loss_sum / acc.accepted
    perp_F2 = float(n - factor.rank)

    leverage = np.einsum("ij,ij->i", factor.basis, factor.basis)
    if plan is not None:
        predicted = float(np.sum((1.0 - leverage) * _finite_ratio(plan, m)))
    elif family.family.value == "gaussian" and m > factor.rank + 1:
        predicted = factor.rank / (m - factor.rank - 1) * perp_F2
    else:
        predicted = math.nan

    return ProjectionMoments(
        bias_F2=bias_F2,
        second_moment=second,
        predicted_trace=predicted,
        perp_F2=perp_F2,
        accepted=acc.accepted,
        rejected=acc.rejected,
        noise_floor=(second - bias_F2) / (acc.accepted - 1) if acc.accepted > 1 else math.nan,
    )


def min_row_norm_ratio(X) -> float:
    """min_i ||x_i||^2 / ||X||_F^2 (diagnostic only)."""
    X = as_matrix(X, "X")
    norms = np.einsum("ij,ij->i", X, X)
    total = norms.sum()
    return float(norms.min() / total) if total > 0 else math.nan
