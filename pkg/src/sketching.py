"""Sampling distributions, sketch operators and the subspace-embedding check.

Row-sampling sketches keep the drawn indices and weights rather than a dense
matrix; SRHT keeps its sign diagonal and selected rows and applies the
Walsh-Hadamard transform on demand.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from logging import getLogger
from typing import Optional, Union

import numpy as np

from .errors import AllZeroRows, DebiasUndefined, InvalidSparsity, NotPowerOfTwo, ShapeMismatch
from .matcore import ThinFactorization, as_matrix, leverage_scores, thin_factorize

logger = getLogger(__name__)

DEBIAS_FLOOR = 1e-8


class PlanKind(str, Enum):
    """How a sampling distribution was derived."""

    UNIFORM = "uniform"
    ROW_NORM = "row_norm"
    EXACT_LEVERAGE = "exact_leverage"
    SHRINKAGE = "shrinkage"
    CUSTOM = "custom"


class SketchVariant(str, Enum):
    ROW_SAMPLING = "row_sampling"
    SRHT = "srht"
    GAUSSIAN = "gaussian"
    SPARSE_SIGN = "sparse_sign"


class AliasTable:
    """Vose alias sampler over the support of a discrete distribution.

    Zero-weight entries are left out of the table entirely, so they can never
    be drawn regardless of floating point leftovers in the construction.
    """

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        self.support = np.flatnonzero(weights > 0)
        if self.support.size == 0:
            raise ValueError("Alias table needs at least one positive weight")
        k = self.support.size
        scaled = weights[self.support] / weights[self.support].sum() * k
        self.prob = np.zeros(k)
        self.alias = np.arange(k)

        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # Leftovers are numerically 1.
        for i in large + small:
            self.prob[i] = 1.0

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        column = rng.integers(0, self.support.size, size=size)
        coin = rng.random(size)
        picked = np.where(coin < self.prob[column], column, self.alias[column])
        return self.support[picked]


@dataclass(frozen=True)
class SamplingPlan:
    """Importance distribution over the rows of a matrix plus its leverage diagnostics."""

    probabilities: np.ndarray
    leverage: np.ndarray
    rank: int
    theta_min: float
    theta_max: float
    kind: PlanKind
    shrinkage: Optional[float] = None
    sampler: AliasTable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sampler", AliasTable(self.probabilities))

    @property
    def n(self) -> int:
        return int(self.probabilities.shape[0])

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probabilities > 0)

    def leverage_ratio(self, m: int) -> np.ndarray:
        """l_i / (m pi_i) per row; 0 where l_i = 0, inf where l_i > 0 but pi_i = 0."""
        positive = self.leverage > 0
        if self.kind == PlanKind.EXACT_LEVERAGE:
            return np.where(positive, self.rank / m, 0.0)
        ratio = np.zeros(self.n)
        drawable = positive & (self.probabilities > 0)
        ratio[drawable] = self.leverage[drawable] / (m * self.probabilities[drawable])
        ratio[positive & ~drawable] = np.inf
        return ratio


def _theta_factors(leverage: np.ndarray, probabilities: np.ndarray, rank: int) -> tuple[float, float]:
    positive = leverage > 0
    if rank == 0 or not np.any(positive):
        return 1.0, 1.0
    ratios = np.full(int(positive.sum()), np.inf)
    lev = leverage[positive]
    probs = probabilities[positive]
    drawable = probs > 0
    ratios[drawable] = lev[drawable] / (probs[drawable] * rank)
    return float(ratios.min()), float(ratios.max())


def _make_plan(probabilities: np.ndarray, leverage: np.ndarray, rank: int, kind: PlanKind,
               shrinkage: Optional[float] = None) -> SamplingPlan:
    theta_min, theta_max = _theta_factors(leverage, probabilities, rank)
    return SamplingPlan(
        probabilities=probabilities,
        leverage=leverage,
        rank=rank,
        theta_min=theta_min,
        theta_max=theta_max,
        kind=kind,
        shrinkage=shrinkage,
    )


def build_distribution(X, kind: Union[PlanKind, str], lam: Optional[float] = None) -> SamplingPlan:
    kind = PlanKind(kind)
    X = as_matrix(X, "X")
    n = X.shape[0]
    if kind == PlanKind.SHRINKAGE:
        if lam is None or not 0.0 <= lam <= 1.0:
            raise ValueError(f"shrinkage plans need lambda in [0, 1], got {lam}")
    elif lam is not None:
        raise ValueError(f"lambda is only meaningful for shrinkage plans, got kind {kind.value}")
    if kind == PlanKind.CUSTOM:
        raise ValueError("custom plans are built with plan_from_probabilities")

    f = thin_factorize(X)
    leverage = np.einsum("ij,ij->i", f.basis, f.basis)
    rank = f.rank

    if kind == PlanKind.UNIFORM:
        probs = np.full(n, 1.0 / n)
    elif kind == PlanKind.ROW_NORM:
        row_norms = np.einsum("ij,ij->i", X, X)
        total = row_norms.sum()
        if total == 0:
            raise AllZeroRows("row-norm plan requested for a matrix with zero Frobenius norm")
        probs = row_norms / total
    else:
        if rank == 0:
            raise AllZeroRows(f"{kind.value} plan needs numeric rank >= 1")
        probs = leverage / rank
        if kind == PlanKind.SHRINKAGE:
            probs = lam * probs + (1.0 - lam) / n
    probs = probs / probs.sum()
    return _make_plan(probs, leverage, rank, kind, lam)


def plan_from_probabilities(X, probabilities) -> SamplingPlan:
    """Custom plan with caller-supplied probabilities; leverage still comes from X."""
    X = as_matrix(X, "X")
    probs = np.asarray(probabilities, dtype=np.float64).ravel()
    if probs.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"{probs.shape[0]} probabilities for {X.shape[0]} rows")
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ValueError("probabilities must be finite and nonnegative")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError(f"probabilities must sum to 1, got {probs.sum()!r}")
    f = thin_factorize(X)
    leverage = np.einsum("ij,ij->i", f.basis, f.basis)
    return _make_plan(probs, leverage, f.rank, PlanKind.CUSTOM)


@dataclass(frozen=True)
class RowSample:
    """m row indices drawn with replacement and their rescaling weights."""

    indices: np.ndarray
    base_weights: np.ndarray
    debias_weights: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return int(self.indices.shape[0])

    def weights(self, debiased: bool = False) -> np.ndarray:
        if not debiased:
            return self.base_weights
        if self.debias_weights is None:
            raise DebiasUndefined("sample carries no debias weights")
        return self.base_weights * self.debias_weights


def draw_sample(plan: SamplingPlan, m: int, rng: np.random.Generator) -> RowSample:
    if m < 1:
        raise ValueError(f"sample size must be >= 1, got {m}")
    indices = plan.sampler.draw(m, rng)
    return RowSample(indices=indices, base_weights=1.0 / np.sqrt(m * plan.probabilities[indices]))


def check_debias_feasible(plan: SamplingPlan, m: int, floor: float = DEBIAS_FLOOR):
    """Raise DebiasUndefined unless every drawable row admits a debias weight at sample size m."""
    support = plan.support
    margin = 1.0 - plan.leverage_ratio(m)[support]
    bad = support[margin <= floor]
    if bad.size:
        raise DebiasUndefined(
            f"debias weights undefined at m={m} for {bad.size} row(s) (first: {bad[:5].tolist()}); "
            f"m is too small relative to theta_max * p = {plan.theta_max * plan.rank:.3g}"
        )


def debias_factors(plan: SamplingPlan, m: int, ratio: np.ndarray) -> np.ndarray:
    """Per-row debias rescaling for leverage ratios `ratio` = l_i/(m pi_i) already checked feasible.

    Exact-leverage plans have a constant ratio, so the factor collapses to sqrt(m / (m - rank)).
    """
    if plan.kind == PlanKind.EXACT_LEVERAGE:
        return np.where(ratio > 0, np.sqrt(m / (m - plan.rank)), 1.0)
    return 1.0 / np.sqrt(1.0 - ratio)


def attach_debias_weights(sample: RowSample, plan: SamplingPlan, m: int, floor: float = DEBIAS_FLOOR) -> RowSample:
    ratio = plan.leverage_ratio(m)[sample.indices]
    margin = 1.0 - ratio
    if np.any(margin <= floor):
        bad = np.unique(sample.indices[margin <= floor])
        raise DebiasUndefined(f"1 - l_i/(m pi_i) <= {floor} for drawn rows {bad[:5].tolist()} at m={m}")
    weights = debias_factors(plan, m, ratio)
    return replace(sample, debias_weights=weights)


class SketchOperator(ABC):
    """A realized m x n sketch S, applied lazily to matrices with n rows."""

    variant: SketchVariant
    input_dim: int
    output_dim: int

    @property
    def max_rows(self) -> int:
        return self.input_dim

    @property
    def descriptor(self) -> str:
        return self.variant.value

    def apply(self, M) -> np.ndarray:
        M = as_matrix(M, "M")
        if M.shape[0] > self.max_rows or (M.shape[0] != self.input_dim and self.max_rows == self.input_dim):
            raise ShapeMismatch(f"{self.descriptor} sketch expects {self.input_dim} rows, got {M.shape[0]}")
        return self._apply(M)

    def apply_transpose(self, Z) -> np.ndarray:
        """S^T Z, with input_dim rows."""
        Z = as_matrix(Z, "Z")
        if Z.shape[0] != self.output_dim:
            raise ShapeMismatch(f"{self.descriptor} sketch transpose expects {self.output_dim} rows, got {Z.shape[0]}")
        return self._apply_transpose(Z)

    def to_dense(self) -> np.ndarray:
        return self.apply(np.eye(self.input_dim))

    @abstractmethod
    def _apply(self, M: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _apply_transpose(self, Z: np.ndarray) -> np.ndarray:
        ...


@dataclass(frozen=True)
class RowSamplingSketch(SketchOperator):
    input_dim: int
    output_dim: int
    sample: RowSample
    debiased: bool = False
    label: str = "row_sampling"
    variant: SketchVariant = field(default=SketchVariant.ROW_SAMPLING, init=False)

    def __post_init__(self):
        if self.debiased and self.sample.debias_weights is None:
            raise DebiasUndefined("debiased row sampling needs a sample with debias weights")
        if self.sample.m != self.output_dim:
            raise ShapeMismatch(f"sample has {self.sample.m} rows but output_dim is {self.output_dim}")

    @property
    def descriptor(self) -> str:
        return f"{self.label}+debiased" if self.debiased else self.label

    @property
    def weights(self) -> np.ndarray:
        return self.sample.weights(self.debiased)

    def _apply(self, M):
        return self.weights[:, None] * M[self.sample.indices]

    def _apply_transpose(self, Z):
        out = np.zeros((self.input_dim, Z.shape[1]))
        np.add.at(out, self.sample.indices, self.weights[:, None] * Z)
        return out


@dataclass(frozen=True)
class SrhtSketch(SketchOperator):
    input_dim: int
    output_dim: int
    padded_dim: int
    signs: np.ndarray
    indices: np.ndarray
    debias_weights: Optional[np.ndarray] = None
    variant: SketchVariant = field(default=SketchVariant.SRHT, init=False)

    @property
    def max_rows(self) -> int:
        return self.padded_dim

    @property
    def descriptor(self) -> str:
        return "dsrht" if self.debias_weights is not None else "srht"

    @property
    def row_weights(self) -> np.ndarray:
        w = np.full(self.output_dim, np.sqrt(self.padded_dim / self.output_dim))
        if self.debias_weights is not None:
            w = w * self.debias_weights
        return w

    def mix(self, M) -> np.ndarray:
        """H D M_pad / sqrt(N)."""
        M = as_matrix(M, "M")
        if M.shape[0] > self.padded_dim:
            raise ShapeMismatch(f"SRHT of size {self.padded_dim} cannot mix {M.shape[0]} rows")
        buf = np.zeros((self.padded_dim, M.shape[1]))
        buf[:M.shape[0]] = M * self.signs[:M.shape[0], None]
        fwht_inplace(buf)
        buf /= np.sqrt(self.padded_dim)
        return buf

    def _apply(self, M):
        return self.row_weights[:, None] * self.mix(M)[self.indices]

    def _apply_transpose(self, Z):
        buf = np.zeros((self.padded_dim, Z.shape[1]))
        np.add.at(buf, self.indices, self.row_weights[:, None] * Z)
        fwht_inplace(buf)
        buf /= np.sqrt(self.padded_dim)
        buf *= self.signs[:, None]
        return buf[:self.input_dim]


@dataclass(frozen=True)
class GaussianSketch(SketchOperator):
    input_dim: int
    output_dim: int
    matrix: np.ndarray
    variant: SketchVariant = field(default=SketchVariant.GAUSSIAN, init=False)

    def _apply(self, M):
        return self.matrix @ M

    def _apply_transpose(self, Z):
        return self.matrix.T @ Z


@dataclass(frozen=True)
class SparseSignSketch(SketchOperator):
    input_dim: int
    output_dim: int
    positions: np.ndarray
    signs: np.ndarray
    scale: float
    variant: SketchVariant = field(default=SketchVariant.SPARSE_SIGN, init=False)

    @property
    def sparsity(self) -> int:
        return int(self.positions.shape[1])

    @property
    def descriptor(self) -> str:
        return f"sparse_sign({self.sparsity})"

    def _apply(self, M):
        return self.scale * np.einsum("ms,msc->mc", self.signs, M[self.positions])

    def _apply_transpose(self, Z):
        out = np.zeros((self.input_dim, Z.shape[1]))
        contrib = (self.scale * self.signs)[:, :, None] * Z[:, None, :]
        np.add.at(out, self.positions.ravel(), contrib.reshape(-1, Z.shape[1]))
        return out


def apply_sketch(op: SketchOperator, M) -> np.ndarray:
    return op.apply(M)


def fwht_inplace(v: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0, in Sylvester order.

    Works on a vector or on every column of a 2-D array at once.
    """
    n = v.shape[0]
    if n < 1 or n & (n - 1):
        raise NotPowerOfTwo(f"Walsh-Hadamard length must be a power of two, got {n}")
    work = v if v.flags.c_contiguous else np.ascontiguousarray(v)
    h = 1
    while h < n:
        view = work.reshape(n // (2 * h), 2, h, -1)
        top = view[:, 0].copy()
        view[:, 0] += view[:, 1]
        view[:, 1] *= -1
        view[:, 1] += top
        h *= 2
    if work is not v:
        v[...] = work
    return v


def next_power_of_two(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length()


def srht_operator(n: int, m: int, rng: np.random.Generator) -> SrhtSketch:
    if m < 1:
        raise ValueError(f"sketch size must be >= 1, got {m}")
    N = next_power_of_two(n)
    signs = rng.integers(0, 2, size=N) * 2.0 - 1.0
    indices = rng.integers(0, N, size=m)
    return SrhtSketch(input_dim=n, output_dim=m, padded_dim=N, signs=signs, indices=indices)


def srht_debias(op: SrhtSketch, X, floor: float = DEBIAS_FLOOR) -> SrhtSketch:
    """Debias the uniform selection stage with leverage scores of H D X_pad / sqrt(N)."""
    lev = leverage_scores(op.mix(X))
    margin = 1.0 - lev[op.indices] * op.padded_dim / op.output_dim
    if np.any(margin <= floor):
        raise DebiasUndefined(f"DSRHT debias weights undefined at m={op.output_dim} (N={op.padded_dim})")
    return replace(op, debias_weights=1.0 / np.sqrt(margin))


def gaussian_operator(n: int, m: int, rng: np.random.Generator) -> GaussianSketch:
    if m < 1:
        raise ValueError(f"sketch size must be >= 1, got {m}")
    return GaussianSketch(input_dim=n, output_dim=m, matrix=rng.standard_normal((m, n)) / np.sqrt(m))


def sparse_sign_operator(n: int, m: int, s: int, rng: np.random.Generator) -> SparseSignSketch:
    if not 1 <= s <= n:
        raise InvalidSparsity(f"sparsity must lie in [1, {n}], got {s}")
    if m < 1:
        raise ValueError(f"sketch size must be >= 1, got {m}")
    positions = np.argsort(rng.random((m, n)), axis=1)[:, :s]
    signs = rng.integers(0, 2, size=(m, s)) * 2.0 - 1.0
    return SparseSignSketch(input_dim=n, output_dim=m, positions=positions, signs=signs,
                            scale=float(np.sqrt(n / (m * s))))


def subspace_embedding_check(basis: Union[ThinFactorization, np.ndarray], op: SketchOperator, eps: float) -> bool:
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    U = basis.basis if isinstance(basis, ThinFactorization) else as_matrix(basis, "basis")
    if U.shape[1] == 0:
        return True
    SU = op.apply(U)
    eig = np.linalg.eigvalsh(SU.T @ SU)
    return bool(eig[0] >= 1.0 / (1.0 + eps) and eig[-1] <= 1.0 + eps)


class Family(str, Enum):
    """Sketch families selectable from experiment configs."""

    UNIFORM = "uniform"
    ROWNORM = "rownorm"
    LEV = "lev"
    SHRINKAGE = "shrinkage"
    CUSTOM = "custom"
    SRHT = "srht"
    DSRHT = "dsrht"
    GAUSSIAN = "gaussian"
    SPARSE_SIGN = "sparse_sign"


_PLAN_KINDS = {
    Family.UNIFORM: PlanKind.UNIFORM,
    Family.ROWNORM: PlanKind.ROW_NORM,
    Family.LEV: PlanKind.EXACT_LEVERAGE,
    Family.SHRINKAGE: PlanKind.SHRINKAGE,
    Family.CUSTOM: PlanKind.CUSTOM,
}


@dataclass(frozen=True)
class SketchFamily:
    """Recipe for drawing one sketch realization per trial."""

    family: Family
    shrinkage: Optional[float] = None
    sparsity: Optional[int] = None
    probabilities: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family == Family.SHRINKAGE and self.shrinkage is None:
            raise ValueError("shrinkage family needs lambda")
        if self.family == Family.SPARSE_SIGN and (self.sparsity is None or self.sparsity < 1):
            raise InvalidSparsity(f"sparse_sign family needs sparsity >= 1, got {self.sparsity}")
        if self.family == Family.CUSTOM and self.probabilities is None:
            raise ValueError("custom family needs probabilities")

    @property
    def is_sampling(self) -> bool:
        return self.family in _PLAN_KINDS

    @property
    def supports_debias(self) -> bool:
        return self.is_sampling or self.family == Family.DSRHT

    @property
    def label(self) -> str:
        if self.family == Family.SHRINKAGE:
            return f"shrinkage({self.shrinkage:g})"
        if self.family == Family.SPARSE_SIGN:
            return f"sparse_sign({self.sparsity})"
        return self.family.value

    def plan_for(self, A) -> Optional[SamplingPlan]:
        if not self.is_sampling:
            return None
        if self.family == Family.CUSTOM:
            return plan_from_probabilities(A, self.probabilities)
        return build_distribution(A, _PLAN_KINDS[self.family], self.shrinkage)

    def draw(self, n: int, m: int, rng: np.random.Generator, plan: Optional[SamplingPlan] = None) -> SketchOperator:
        if self.is_sampling:
            if plan is None:
                raise ValueError(f"{self.label} sketches need a sampling plan")
            return RowSamplingSketch(input_dim=n, output_dim=m, sample=draw_sample(plan, m, rng), label=self.label)
        if self.family in (Family.SRHT, Family.DSRHT):
            return srht_operator(n, m, rng)
        if self.family == Family.GAUSSIAN:
            return gaussian_operator(n, m, rng)
        return sparse_sign_operator(n, m, self.sparsity, rng)

    def debias(self, op: SketchOperator, A, plan: Optional[SamplingPlan], floor: float = DEBIAS_FLOOR) -> SketchOperator:
        """Debiased counterpart of a realization drawn by `draw` for the matrix A."""
        if self.is_sampling:
            sample = attach_debias_weights(op.sample, plan, op.output_dim, floor)
            return replace(op, sample=sample, debiased=True)
        if self.family == Family.DSRHT:
            return srht_debias(op, A, floor)
        raise DebiasUndefined(f"{self.label} sketches have no debiased variant")
