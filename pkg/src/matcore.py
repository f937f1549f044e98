"""Dense linear-algebra foundation: thin SVD, pseudoinverses, leverage scores, projections and losses."""

from dataclasses import dataclass
from logging import getLogger
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NonFinite, ShapeMismatch

logger = getLogger(__name__)


@dataclass(frozen=True)
class ThinFactorization:
    """X = basis @ diag(singular_values) @ right_factor restricted to the numeric rank."""

    basis: np.ndarray
    singular_values: np.ndarray
    right_factor: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])

    @property
    def scaled_right_factor(self) -> np.ndarray:
        """diag(singular_values) @ right_factor, so that X = basis @ scaled_right_factor."""
        return self.singular_values[:, None] * self.right_factor


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite float64 2-D array; 1-D input becomes a single column."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 1-D or 2-D, got {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains non-finite entries")
    return arr


def default_rank_tol(singular_values: np.ndarray, shape: tuple[int, ...]) -> float:
    if singular_values.size == 0:
        return 0.0
    return float(np.finfo(np.float64).eps * max(shape) * singular_values[0])


def thin_factorize(X, rank_tol: Optional[float] = None) -> ThinFactorization:
    X = as_matrix(X, "X")
    if rank_tol is not None and rank_tol < 0:
        raise ValueError(f"rank_tol must be nonnegative, got {rank_tol}")
    u, s, vt = linalg.svd(X, full_matrices=False, lapack_driver="gesdd")
    tol = default_rank_tol(s, X.shape) if rank_tol is None else rank_tol
    k = int(np.count_nonzero(s > tol))
    return ThinFactorization(basis=u[:, :k], singular_values=s[:k], right_factor=vt[:k])


def pseudoinverse(X, rank_tol: Optional[float] = None) -> np.ndarray:
    f = thin_factorize(X, rank_tol)
    return f.right_factor.T @ (f.basis.T / f.singular_values[:, None])


def min_norm_solve(A, B, rank_tol: Optional[float] = None) -> np.ndarray:
    """A^dagger @ B without forming the pseudoinverse."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise ShapeMismatch(f"A has {A.shape[0]} rows but B has {B.shape[0]}")
    f = thin_factorize(A, rank_tol)
    return f.right_factor.T @ ((f.basis.T @ B) / f.singular_values[:, None])


def batched_min_norm_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Minimum-norm solutions for a stack of systems A[b] x = B[b].

    A has shape (batch, rows, cols), B has shape (batch, rows, k). The rank
    tolerance is the default one, applied per system.
    """
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    tol = np.finfo(np.float64).eps * max(A.shape[1:]) * s[:, :1]
    inv = np.divide(1.0, s, out=np.zeros_like(s), where=s > tol)
    coeffs = np.matmul(np.swapaxes(u, 1, 2), B) * inv[:, :, None]
    return np.matmul(np.swapaxes(vt, 1, 2), coeffs)


def leverage_scores(X) -> np.ndarray:
    f = thin_factorize(X)
    return np.einsum("ij,ij->i", f.basis, f.basis)


def orthogonal_projection(X) -> tuple[np.ndarray, np.ndarray]:
    f = thin_factorize(X)
    P = f.basis @ f.basis.T
    return P, np.eye(P.shape[0]) - P


def loss_ols(X, y, beta) -> float:
    X = as_matrix(X, "X")
    y = as_matrix(y, "y")
    beta = as_matrix(beta, "beta")
    if y.shape != (X.shape[0], 1) or beta.shape != (X.shape[1], 1):
        raise ShapeMismatch(f"loss_ols expects X {X.shape}, y ({X.shape[0]}, 1), beta ({X.shape[1]}, 1); "
                            f"got y {y.shape}, beta {beta.shape}")
    resid = y - X @ beta
    return float(np.sum(resid * resid))


def loss_cur(X, C, U, R) -> float:
    X, C, U, R = (as_matrix(a, name) for a, name in ((X, "X"), (C, "C"), (U, "U"), (R, "R")))
    n, p = X.shape
    if C.shape[0] != n or R.shape[1] != p or U.shape != (C.shape[1], R.shape[0]):
        raise ShapeMismatch(f"loss_cur shapes do not conform: X {X.shape}, C {C.shape}, U {U.shape}, R {R.shape}")
    resid = C @ U @ R - X
    return float(np.sum(resid * resid))
