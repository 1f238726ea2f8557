"""Comparison classifiers: positive-centroid, scratch logistic regression, Rocchio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import LinearClassifier, sigmoid
from .validation import as_binary_labels, as_feature_matrix, as_feature_vector


def proto_fit(X_pos) -> LinearClassifier:
    """Centroid of the positive support features as the classifier weights."""
    X = as_feature_matrix(X_pos, name="positive support")
    return LinearClassifier(weights=X.mean(axis=0), bias=None)


def lr_fit(X, y, steps: int = 100, lr: float = 0.5, l2_weight: float = 1e-4) -> LinearClassifier:
    """Full-batch gradient-descent logistic regression from W=0, b=0.

    Deterministic; trains a per-task scalar bias. With steps=0 this returns
    the zero classifier (every score 0.5).
    """
    X = as_feature_matrix(X, name="support")
    y = as_binary_labels(y, X.shape[0])
    n, d = X.shape
    W = np.zeros(d)
    b = 0.0
    for _ in range(steps):
        p = sigmoid(X @ W + b)
        err = (p - y) / n  # = -lambda/n
        gW = X.T @ err + 2.0 * l2_weight * W
        gb = float(np.sum(err)) + 2.0 * l2_weight * b
        W = W - lr * gW
        b = b - lr * gb
    return LinearClassifier(weights=W, bias=b)


@dataclass(frozen=True)
class RocchioWeights:
    """Classical IR defaults; the mixing rule is q' = a*q0 + b*mean(rel) - g*mean(nonrel)."""

    alpha_q: float = 1.0
    beta_rel: float = 0.75
    gamma_nonrel: float = 0.15

    def __post_init__(self):
        for name in ("alpha_q", "beta_rel", "gamma_nonrel"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def rocchio_refine(q0, relevant, nonrelevant, weights: RocchioWeights = RocchioWeights()) -> np.ndarray:
    """Move the query vector toward relevant and away from non-relevant feedback.

    Empty feedback sets contribute zero; ranking downstream is by cosine
    against the refined vector.
    """
    q = as_feature_vector(q0, name="q0")
    out = weights.alpha_q * q
    rel = np.asarray(relevant, dtype=np.float64)
    if rel.size:
        rel = rel.reshape(-1, q.size)
        out = out + weights.beta_rel * rel.mean(axis=0)
    non = np.asarray(nonrelevant, dtype=np.float64)
    if non.size:
        non = non.reshape(-1, q.size)
        out = out - weights.gamma_nonrel * non.mean(axis=0)
    return out
