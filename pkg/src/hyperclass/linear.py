"""Shared linear-classifier primitives: sigmoid, BCE loss, scoring, cosine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Probabilities are clamped inside the loss only; raw scores stay unclamped so
# metric tie structure (AUROC) is preserved.
BCE_EPS = 1e-12


def sigmoid(z):
    """Numerically stable logistic function, safe for |z| up to ~1e3.

    Uses the branch-on-sign formulation so exp never overflows. Accepts
    scalars or arrays; returns the same shape.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z_arr)
    pos = z_arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z_arr[pos]))
    ez = np.exp(z_arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    if np.isscalar(z) or z_arr.ndim == 0:
        return float(out)
    return out


def log_sigmoid(z):
    """log(sigmoid(z)) computed without underflow: -softplus(-z)."""
    z_arr = np.asarray(z, dtype=np.float64)
    out = np.where(z_arr > 0, -np.log1p(np.exp(-np.abs(z_arr))),
                   z_arr - np.log1p(np.exp(-np.abs(z_arr))))
    if np.isscalar(z) or z_arr.ndim == 0:
        return float(out)
    return out


def bce_loss(p, y):
    """Binary cross-entropy with probabilities clamped to [eps, 1-eps].

    Finite for every p in [0, 1]; at p=0, y=1 the value is -log(eps).
    """
    p_arr = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y_arr = np.asarray(y, dtype=np.float64)
    out = -y_arr * np.log(p_arr) - (1.0 - y_arr) * np.log(1.0 - p_arr)
    if np.isscalar(p) or np.asarray(p).ndim == 0:
        return float(out)
    return out


@dataclass
class LinearClassifier:
    """A d-dimensional linear scorer; `bias` is the optional scalar intercept
    used by the logistic-regression baseline (the hyper-network model folds
    its bias vector into the weights)."""

    weights: np.ndarray
    bias: float | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("classifier weights must be finite")
        if self.bias is not None and not np.isfinite(self.bias):
            raise ValueError("classifier bias must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def decision(clf: LinearClassifier, X) -> np.ndarray:
    """Raw linear score W.x (+ bias); accepts a vector or a row matrix."""
    X_arr = np.asarray(X, dtype=np.float64)
    last = X_arr.shape[-1] if X_arr.ndim else 0
    if last != clf.dim:
        raise ValueError(f"feature dimension {last} does not match classifier dimension {clf.dim}")
    z = X_arr @ clf.weights
    if clf.bias is not None:
        z = z + clf.bias
    return z


def score(clf: LinearClassifier, X):
    """Probability sigmoid(W.x + bias)."""
    z = decision(clf, X)
    return sigmoid(z)


def cosine_scores(X, q) -> np.ndarray:
    """Cosine similarity of each row of X against query vector q."""
    X_arr = np.asarray(X, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64).reshape(-1)
    if X_arr.shape[-1] != q_arr.shape[0]:
        raise ValueError(f"feature dimension {X_arr.shape[-1]} does not match query dimension {q_arr.shape[0]}")
    qn = np.linalg.norm(q_arr)
    if qn == 0.0:
        raise ValueError("cosine similarity is undefined for a zero query vector")
    norms = np.linalg.norm(X_arr, axis=-1)
    norms = np.where(norms == 0.0, 1.0, norms)
    return (X_arr @ q_arr) / (norms * qn)
