"""Dense linear-algebra and statistics primitives used by the whole package.

Everything here is pure, operates on float64 numpy arrays, and uses
population (1/n) variance throughout so that z-scoring and Pearson
correlation share one convention.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import SingularSystemError

# A normal matrix is declared singular when a Cholesky pivot falls below
# this fraction of the largest initial diagonal entry.
SINGULARITY_RTOL = 1e-12


def _as_matrix(X, name: str = "X") -> np.ndarray:
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite values")
    return A


def _as_vector(x, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def _cholesky_spd(A: np.ndarray) -> np.ndarray:
    """Cholesky factor of a symmetric positive-definite matrix.

    Raises
    ------
    SingularSystemError
        If any pivot falls below ``SINGULARITY_RTOL`` relative to the
        largest diagonal entry of ``A``.
    """
    n = A.shape[0]
    L = np.zeros_like(A)
    scale = float(np.max(np.abs(np.diag(A)))) if n else 0.0
    if scale <= 0.0:
        raise SingularSystemError("singular system: zero normal matrix")
    for k in range(n):
        pivot = A[k, k] - L[k, :k] @ L[k, :k]
        if pivot <= SINGULARITY_RTOL * scale:
            raise SingularSystemError(
                f"singular system: relative pivot {pivot / scale:.3e} at column {k}"
            )
        L[k, k] = np.sqrt(pivot)
        if k + 1 < n:
            L[k + 1 :, k] = (A[k + 1 :, k] - L[k + 1 :, :k] @ L[k, :k]) / L[k, k]
    return L


def _solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A via Cholesky."""
    L = _cholesky_spd(A)
    n = A.shape[0]
    z = np.zeros(n)
    for k in range(n):
        z[k] = (b[k] - L[k, :k] @ z[:k]) / L[k, k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (z[k] - L[k + 1 :, k] @ x[k + 1 :]) / L[k, k]
    return x


def weighted_least_squares(X, y, w) -> np.ndarray:
    """Solve min_beta sum_i w_i (y_i - X_i . beta)^2.

    Parameters
    ----------
    X : (n, p) design matrix, n >= p.
    y : (n,) responses.
    w : (n,) nonnegative observation weights; at least p strictly positive.

    Returns
    -------
    (p,) coefficient vector.

    Raises
    ------
    SingularSystemError
        If the weighted normal matrix X'WX is singular (callers may retry
        with :func:`ridge_regression`).
    """
    X = _as_matrix(X)
    y = _as_vector(y, "y")
    w = _as_vector(w, "w")
    n, p = X.shape
    if y.shape[0] != n or w.shape[0] != n:
        raise ValueError("X, y, w must agree on the number of rows")
    if n < p:
        raise ValueError(f"underdetermined system: n={n} < p={p}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if int(np.count_nonzero(w > 0)) < p:
        raise ValueError(f"need at least p={p} strictly positive weights")
    Xw = X * w[:, None]
    A = Xw.T @ X
    b = Xw.T @ y
    return _solve_spd(A, b)


def ridge_regression(X, y, w, lam: float) -> np.ndarray:
    """Weighted least squares with an L2 penalty lam * ||beta||^2.

    ``lam = 0`` reduces to :func:`weighted_least_squares` whenever that
    system is nonsingular.
    """
    X = _as_matrix(X)
    y = _as_vector(y, "y")
    w = _as_vector(w, "w")
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be a finite nonnegative real")
    if lam == 0.0:
        return weighted_least_squares(X, y, w)
    n, p = X.shape
    if y.shape[0] != n or w.shape[0] != n:
        raise ValueError("X, y, w must agree on the number of rows")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    Xw = X * w[:, None]
    A = Xw.T @ X + lam * np.eye(p)
    b = Xw.T @ y
    return _solve_spd(A, b)


def pearson_flagged(x, y) -> tuple[float, bool]:
    """Pearson correlation plus a flag marking constant input.

    Returns ``(r, constant)`` where ``constant`` is True when either
    argument has zero variance; in that case r is defined as 0.0 so that
    full correlation matrices stay renderable.
    """
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y must have equal length")
    if n < 2:
        raise ValueError("need at least 2 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx) / n
    vy = float(dy @ dy) / n
    if vx <= 0.0 or vy <= 0.0:
        return 0.0, True
    r = (float(dx @ dy) / n) / np.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0)), False


def pearson(x, y) -> float:
    """Pearson product-moment correlation in [-1, 1] (population moments)."""
    r, _ = pearson_flagged(x, y)
    return r


class ZScoreStats(NamedTuple):
    """Per-column mean/stddev fitted for z-score normalization."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask; constant columns get std 1 and map to 0


def zscore_fit(columns) -> ZScoreStats:
    """Fit per-column z-score statistics with population (1/n) variance.

    Constant columns are flagged and stored with stddev 1 so that applying
    the transform yields 0 instead of NaN.
    """
    A = _as_matrix(columns, "columns")
    mean = A.mean(axis=0)
    var = ((A - mean) ** 2).mean(axis=0)
    std = np.sqrt(var)
    constant = std == 0.0
    std = np.where(constant, 1.0, std)
    return ZScoreStats(mean=mean, std=std, constant=constant)


def zscore_apply(values, stats: ZScoreStats) -> np.ndarray:
    """Apply fitted z-score statistics to rows (last axis = columns)."""
    v = np.asarray(values, dtype=np.float64)
    return (v - stats.mean) / stats.std


def quantiles(x, cuts) -> np.ndarray:
    """Linear-interpolation quantiles at the given probabilities.

    ``cuts`` must be strictly increasing probabilities in (0, 1). The
    output is forced monotone non-decreasing.
    """
    v = _as_vector(x, "x")
    if v.size == 0:
        raise ValueError("x must be nonempty")
    p = _as_vector(cuts, "cuts")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    if np.any(np.diff(p) <= 0):
        raise ValueError("probabilities must be strictly increasing")
    q = np.quantile(v, p, method="linear")
    return np.maximum.accumulate(q)
