"""Dense tensor primitives: unfoldings and truncated SVD.

Tensors are numpy arrays in C (row-major) order, so fusing leading indices
amounts to a plain reshape.  All factorization helpers report the truncation
error they actually committed, which downstream rounding relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Singular values below this fraction of the largest are treated as zero
# when reporting numerical ranks.
RANK_TOL = 1e-14


def require_finite(T: np.ndarray, what: str = "tensor") -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)):
        raise ValueError(f"{what} contains non-finite entries")
    return T


def unfold(T: np.ndarray, k: int) -> np.ndarray:
    """Matricize T by fusing the first k modes into rows, the rest into columns."""
    T = np.asarray(T)
    if not 0 <= k <= T.ndim:
        raise ValueError(f"unfold position {k} out of range for order-{T.ndim} tensor")
    rows = int(np.prod(T.shape[:k], dtype=np.int64))
    return np.ascontiguousarray(T).reshape(rows, -1)


def fold(M: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    M = np.asarray(M)
    if M.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError(f"cannot fold {M.size} entries into shape {shape}")
    return np.ascontiguousarray(M).reshape(shape)


def frobenius_inner(A: np.ndarray, B: np.ndarray) -> float:
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.dot(A.ravel(), B.ravel()))


@dataclass
class SvdResult:
    """Rank-truncated SVD M ~ U @ diag(s) @ V.T with the committed error."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    err: float

    @property
    def rank(self) -> int:
        return int(self.s.size)


def truncated_svd(
    M: np.ndarray,
    max_rank: int | None = None,
    tol: float | None = None,
) -> SvdResult:
    """SVD of M truncated by rank cap and/or absolute Frobenius tolerance.

    With a tolerance, the retained rank is the smallest one whose discarded
    tail satisfies sqrt(sum of squared tail singular values) <= tol.  The
    reported error is that tail norm; rank-zero results are padded to rank
    one (with a zero singular value) so downstream chains stay well formed.
    """
    M = require_finite(M, "matrix")
    if M.ndim != 2:
        raise ValueError("truncated_svd expects a matrix")
    # Tall orientation is cheaper and numerically steadier for wide inputs.
    transposed = M.shape[0] < M.shape[1]
    W = M.T if transposed else M
    U, s, Vt = np.linalg.svd(W, full_matrices=False)

    tail = np.sqrt(np.maximum(np.cumsum(s[::-1] ** 2)[::-1], 0.0))  # tail[r] = err keeping r
    tail = np.append(tail, 0.0)
    r = s.size
    if tol is not None:
        if tol < 0:
            raise ValueError("tolerance must be nonnegative")
        r = int(np.searchsorted(-tail, -tol))  # smallest r with tail[r] <= tol
    if max_rank is not None:
        if max_rank < 1:
            raise ValueError("max_rank must be positive")
        r = min(r, max_rank)
    r = max(r, 1)
    r = min(r, s.size)
    err = float(tail[r])

    U, s, Vt = U[:, :r], s[:r].copy(), Vt[:r]
    if transposed:
        return SvdResult(U=Vt.T.copy(), s=s, V=U, err=err)
    return SvdResult(U=U, s=s, V=Vt.T.copy(), err=err)


def numerical_rank(s: np.ndarray) -> int:
    """Count singular values above RANK_TOL relative to the largest."""
    s = np.asarray(s)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))
