"""Input validation helpers layered on :mod:`sklearn.utils.validation`."""
import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidArgumentError


def check_samples(X, min_rows=1, min_cols=1, name="X"):
    """Validate a finite 2-D float array with at least ``min_rows`` rows."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True,
                        ensure_min_samples=1, ensure_min_features=1)
    except ValueError as exc:
        raise InvalidArgumentError(f"{name}: {exc}") from exc
    if X.shape[0] < min_rows:
        raise InvalidArgumentError(
            f"{name} needs at least {min_rows} rows, got {X.shape[0]}")
    if X.shape[1] < min_cols:
        raise InvalidArgumentError(
            f"{name} needs at least {min_cols} columns, got {X.shape[1]}")
    return X


def check_weights(sample_weight, m):
    """Return normalized probability weights, or ``None`` for uniform weights."""
    if sample_weight is None:
        return None
    w = np.asarray(sample_weight, dtype=np.float64)
    if w.shape != (m,):
        raise InvalidArgumentError(f"sample_weight must have shape ({m},), got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
        raise InvalidArgumentError("sample_weight must be finite, nonnegative, not all zero")
    return w / w.sum()


def check_int(value, name, low=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if low is not None and value < low:
        raise InvalidArgumentError(f"{name} must be >= {low}, got {value}")
    return value


def check_unit_vector(theta, n=None, atol=1e-12):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise InvalidArgumentError("theta must be a 1-D vector")
    if n is not None and theta.shape[0] != n:
        raise InvalidArgumentError(f"theta has length {theta.shape[0]}, expected {n}")
    if abs(float(theta @ theta) - 1.0) > atol:
        raise InvalidArgumentError("theta must have unit Euclidean norm")
    return theta
