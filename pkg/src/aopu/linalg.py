"""Dense matrix primitives: SVD, thresholded pseudo-inverse, rank, rank ratio.

Matrices are plain 2-D float64 ``numpy`` arrays (row-major). All functions are
pure and never mutate their inputs, so they are safe to call concurrently.
Reductions go through numpy/BLAS with a fixed evaluation order, so repeated
runs with identical inputs are bit-reproducible within one environment.

The singular-value cutoff convention used throughout is the standard
numerical-rank rule: values at or below ``max(rows, cols) * eps`` relative to
the largest singular value are treated as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalError

EPS = float(np.finfo(np.float64).eps)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def default_rtol(shape) -> float:
    """Relative singular-value cutoff: max(rows, cols) * machine epsilon."""
    return max(shape) * EPS


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``A = U @ diag(s) @ V.T`` with ``s`` sorted descending."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def svd(a) -> SvdResult:
    """Thin SVD of a dense matrix.

    Falls back from the divide-and-conquer LAPACK driver to the slower but
    more robust one-sided Jacobi-free ``gesvd`` driver; if both fail a
    :class:`NumericalError` is raised.
    """
    m = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - second driver rarely fails
            raise NumericalError(f"SVD did not converge for shape {m.shape}") from exc
    return SvdResult(u=u, s=s, v=vt.T)


def singular_values(a) -> np.ndarray:
    """Singular values only (descending), with the same fallback as :func:`svd`."""
    m = as_matrix(a)
    try:
        return np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError:
        try:
            return scipy.linalg.svd(m, compute_uv=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover
            raise NumericalError(f"SVD did not converge for shape {m.shape}") from exc


def _inverted_singular_values(s: np.ndarray, shape, rtol) -> np.ndarray:
    if rtol is None:
        rtol = default_rtol(shape)
    if rtol < 0:
        raise InvalidInputError(f"tolerance must be >= 0, got {rtol}")
    smax = s[0] if s.size else 0.0
    cutoff = rtol * smax
    # guard the division: masked entries are zeroed afterwards anyway
    safe = np.where(s > cutoff, s, 1.0)
    return np.where(s > cutoff, 1.0 / safe, 0.0)


def pinv(a, rtol=None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via reciprocals of retained singular values.

    Singular values at or below ``rtol * s_max`` are treated as zero. The
    pseudo-inverse of an all-zero matrix is the zero matrix of transposed
    shape (the limit of the reciprocal rule).
    """
    res = svd(a)
    sinv = _inverted_singular_values(res.s, np.shape(a), rtol)
    return (res.v * sinv) @ res.u.T


def rank(a, rtol=None) -> int:
    """Numerical rank: count of singular values strictly above the cutoff."""
    m = as_matrix(a)
    if min(m.shape) == 0:
        return 0
    s = singular_values(m)
    if rtol is None:
        rtol = default_rtol(m.shape)
    if rtol < 0:
        raise InvalidInputError(f"tolerance must be >= 0, got {rtol}")
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * smax))


def rank_ratio(x_tilde, batch: int | None = None, rtol=None) -> float:
    """Rank of ``x_tilde`` divided by the batch size (its column count).

    Equals 1 exactly when the batch is column-full-rank, i.e. when the
    column Gram matrix is invertible to working precision.
    """
    m = as_matrix(x_tilde, "x_tilde")
    if batch is None:
        batch = m.shape[1]
    if batch <= 0:
        raise InvalidInputError(f"batch size must be positive, got {batch}")
    if m.shape[1] != batch:
        raise InvalidInputError(
            f"x_tilde has {m.shape[1]} columns, expected batch size {batch}"
        )
    return rank(m, rtol=rtol) / batch


def symmetrize(m) -> np.ndarray:
    """(M + M.T) / 2 - suppresses round-off asymmetry in Gram matrices."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"cannot symmetrize non-square shape {a.shape}")
    return (a + a.T) / 2.0


def column_gram(x) -> np.ndarray:
    """Symmetrized ``x.T @ x`` (batch-by-batch Gram of the columns)."""
    m = as_matrix(x)
    return symmetrize(m.T @ m)


def row_gram(x) -> np.ndarray:
    """Symmetrized ``x @ x.T`` (feature-by-feature Gram of the rows)."""
    m = as_matrix(x)
    return symmetrize(m @ m.T)
