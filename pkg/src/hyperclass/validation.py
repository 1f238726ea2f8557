"""Input validation helpers shared by estimators and core routines."""

from __future__ import annotations

import numpy as np


def as_feature_matrix(X, *, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array of finite feature rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D feature matrix, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one row")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has dimension {X.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_feature_vector(x, *, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float64 finite vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if dim is not None and x.size != dim:
        raise ValueError(f"{name} has dimension {x.size}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def as_binary_labels(y, n_rows: int, *, name: str = "y") -> np.ndarray:
    """Coerce to an int64 vector of 0/1 labels matching ``n_rows``."""
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_rows:
        raise ValueError(f"{name} must be 1-D with {n_rows} entries, got shape {y.shape}")
    values = np.unique(y)
    if not np.all(np.isin(values, (0, 1, False, True))):
        raise ValueError(f"{name} must contain only binary labels, got values {values!r}")
    return y.astype(np.int64)
