"""Inversion-bias corrections: the fixed-point diagonal D and the Gaussian inverse-Wishart scale."""

from dataclasses import dataclass
from logging import getLogger
from typing import Optional

import numpy as np

from .errors import AllTrialsRejected, NoConvergence, SingularIntermediate, Undefined
from .matcore import as_matrix, pseudoinverse, thin_factorize
from .metrics import ZetaPolicy
from .sketching import SamplingPlan, SketchFamily
from .trials import TrialOutcome, run_trials

logger = getLogger(__name__)


@dataclass(frozen=True)
class FixedPointDiag:
    d: np.ndarray
    iterations: int
    residual: float
    # False if the max-abs change grew between two iterations after the first.
    monotone: bool = True

    def gram_inverse(self, X) -> np.ndarray:
        """(X^T D X)^dagger."""
        X = as_matrix(X, "X")
        return pseudoinverse(X.T @ (self.d[:, None] * X))


def solve_fixed_point_D(X, plan: SamplingPlan, m: int, tol: float = 1e-10, max_iters: int = 1000,
                        damping: float = 0.0) -> FixedPointDiag:
    """Iterate D_ii <- 1 / (1 + x_i^T (X^T D X)^-1 x_i / (m pi_i)) from D = I."""
    X = as_matrix(X, "X")
    n = X.shape[0]
    if plan.n != n:
        raise ValueError(f"plan covers {plan.n} rows but X has {n}")
    if not 0.0 <= damping < 1.0:
        raise ValueError(f"damping must lie in [0, 1), got {damping}")
    rank = thin_factorize(X).rank
    if m <= rank:
        raise ValueError(f"fixed point needs m > rank(X) = {rank}, got m={m}")

    probs = plan.probabilities
    nonzero = np.any(X != 0, axis=1)
    active = nonzero & (probs > 0)
    blocked = nonzero & (probs == 0)

    d = np.ones(n)
    previous: Optional[float] = None
    monotone = True
    for it in range(1, max_iters + 1):
        f = thin_factorize(np.sqrt(d)[:, None] * X)
        if f.rank < rank:
            raise SingularIntermediate(f"X^T D X lost rank ({f.rank} < {rank}) at iteration {it}")
        Z = X @ (f.right_factor.T / f.singular_values)
        q = np.einsum("ij,ij->i", Z, Z)

        update = np.ones(n)
        update[blocked] = 0.0
        update[active] = 1.0 / (1.0 + q[active] / (m * probs[active]))
        if damping:
            update = (1.0 - damping) * update + damping * d
        residual = float(np.max(np.abs(update - d)))
        d = update
        logger.debug(f"fixed point iteration {it}: residual {residual:.3e}")

        if it > 2 and residual > previous * (1.0 + 1e-9) + 1e-15 and monotone:
            monotone = False
            logger.warning(f"fixed-point residual increased at iteration {it} ({previous:.3e} -> {residual:.3e})")
        previous = residual
        if residual <= tol:
            return FixedPointDiag(d=d, iterations=it, residual=residual, monotone=monotone)

    raise NoConvergence(f"fixed point did not reach tol={tol} after {max_iters} iterations (residual {previous:.3e})")


def gaussian_inverse_scale(m: int, p: int) -> float:
    if m <= p + 1:
        raise Undefined(f"inverse-Wishart scale needs m > p + 1, got m={m}, p={p}")
    return m / (m - p - 1)


@dataclass(frozen=True)
class InverseGramEstimate:
    mean: np.ndarray
    accepted: int
    rejected: int


def mean_inverse_gram(X, family: SketchFamily, m: int, trials: int, base_seed: int,
                      zeta: Optional[ZetaPolicy] = None, threads: int = 1) -> InverseGramEstimate:
    """Monte-Carlo mean of (X_s^T X_s)^dagger over accepted sketches X_s = S X."""
    X = as_matrix(X, "X")
    zeta = zeta or ZetaPolicy.disabled()
    factor = thin_factorize(X)
    plan = family.plan_for(X)
    theta_max = plan.theta_max if plan is not None else 1.0

    def trial(rng: np.random.Generator) -> TrialOutcome:
        op = family.draw(X.shape[0], m, rng, plan)
        if not zeta.accepts(factor, op, theta_max, X):
            return TrialOutcome(accepted=False)
        sketched = op.apply(X)
        return TrialOutcome(accepted=True, estimate=pseudoinverse(sketched.T @ sketched))

    acc = run_trials(trial, trials, base_seed, threads=threads, keep_estimates=False)
    if acc.accepted == 0:
        raise AllTrialsRejected(f"all {acc.rejected} inverse-Gram trials were rejected")
    p = X.shape[1]
    return InverseGramEstimate(mean=acc.mean_estimate.reshape(p, p), accepted=acc.accepted, rejected=acc.rejected)


def predicted_inverse_gram(X, family: SketchFamily, m: int) -> np.ndarray:
    """Target for the mean inverse Gram: Gaussian scale for Gaussian sketches, (X^T D X)^dagger otherwise."""
    X = as_matrix(X, "X")
    plan = family.plan_for(X)
    if plan is None:
        if family.family.value != "gaussian":
            raise Undefined(f"no inverse-Gram prediction for {family.label} sketches")
        return gaussian_inverse_scale(m, thin_factorize(X).rank) * pseudoinverse(X.T @ X)
    return solve_fixed_point_D(X, plan, m).gram_inverse(X)
