"""sklearn-style estimator wrappers around the adaptation methods.

Every estimator follows the scikit-learn contract: constructor stores
hyper-parameters verbatim, ``fit(X, y)`` learns state into trailing-underscore
attributes and returns self, ``decision_function`` yields ranking scores and
``predict_proba`` calibrated probabilities where the method defines them.
This lets the retrieval loop, the evaluation protocols and the HTTP service
drive all four methods through one interface (and lets them compose with
sklearn tooling such as ``clone``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import model
from .baselines import RocchioWeights, lr_fit, proto_fit, rocchio_refine
from .linear import cosine_scores, decision, sigmoid
from .validation import as_binary_labels, as_feature_matrix, as_feature_vector


def _check_fitted(est, attr: str):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet")


class _BinaryScorerMixin:
    """predict/predict_proba in terms of decision_function."""

    def predict_proba(self, X) -> np.ndarray:
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(np.int64)


class HyperClassClassifier(_BinaryScorerMixin, ClassifierMixin, BaseEstimator):
    """Adapts a (v, P, b) initialization to the labeled pool at fit time.

    ``params`` may be a HyperClassParams, a Checkpoint, a checkpoint path, or
    None for a seeded random initialization (``dim`` then required unless fit
    infers it from X). Transductive fitting consumes the unlabeled matrix via
    ``fit(X, y, unlabeled=...)`` and requires an all-positive X.
    """

    def __init__(self, params=None, steps: int = 5, inner_lr: float = 0.5,
                 l2_weight: float = 1e-4, adapt: tuple[str, ...] = ("P", "b"),
                 transductive: bool = False, entropy_weight: float = 0.5,
                 full_entropy: bool = False, dim: int | None = None, seed: int = 0):
        self.params = params
        self.steps = steps
        self.inner_lr = inner_lr
        self.l2_weight = l2_weight
        self.adapt = adapt
        self.transductive = transductive
        self.entropy_weight = entropy_weight
        self.full_entropy = full_entropy
        self.dim = dim
        self.seed = seed

    def _adapt_config(self) -> model.AdaptConfig:
        return model.AdaptConfig(
            steps=self.steps, inner_lr=self.inner_lr, l2_weight=self.l2_weight,
            adapt_set=tuple(self.adapt), transductive=self.transductive,
            entropy_weight=self.entropy_weight, full_entropy=self.full_entropy)

    def _initial_params(self, n_features: int) -> model.HyperClassParams:
        return model.resolve_params(self.params, dim=self.dim or n_features, seed=self.seed)

    def fit(self, X, y=None, unlabeled=None):
        X = as_feature_matrix(X)
        y = np.ones(X.shape[0], dtype=np.int64) if y is None else as_binary_labels(y, X.shape[0])
        init = self._initial_params(X.shape[1])
        cfg = self._adapt_config()
        if self.transductive:
            if unlabeled is None:
                raise ValueError("transductive fitting needs the unlabeled query features")
            if not np.all(y == 1):
                raise ValueError("transductive fitting expects a positives-only support set")
            self.params_ = model.adapt_transductive(init, X, unlabeled, cfg)
        else:
            self.params_ = model.adapt(init, X, y, cfg)
        self.classifier_ = model.compose(self.params_)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        _check_fitted(self, "classifier_")
        return decision(self.classifier_, as_feature_matrix(X, dim=self.classifier_.dim))


class PositiveCentroidClassifier(_BinaryScorerMixin, ClassifierMixin, BaseEstimator):
    """Weights equal the mean of positive support features; negatives are ignored."""

    def fit(self, X, y=None):
        X = as_feature_matrix(X)
        if y is not None:
            y = as_binary_labels(y, X.shape[0])
            X = X[y == 1]
            if X.shape[0] == 0:
                raise ValueError("no positive samples to fit the centroid")
        self.classifier_ = proto_fit(X)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        _check_fitted(self, "classifier_")
        return decision(self.classifier_, as_feature_matrix(X, dim=self.classifier_.dim))


class GradientLogisticRegression(_BinaryScorerMixin, ClassifierMixin, BaseEstimator):
    """Scratch logistic regression fit by full-batch gradient descent."""

    def __init__(self, steps: int = 100, lr: float = 0.5, l2_weight: float = 1e-4):
        self.steps = steps
        self.lr = lr
        self.l2_weight = l2_weight

    def fit(self, X, y):
        X = as_feature_matrix(X)
        y = as_binary_labels(y, X.shape[0])
        self.classifier_ = lr_fit(X, y, steps=self.steps, lr=self.lr, l2_weight=self.l2_weight)
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        _check_fitted(self, "classifier_")
        return decision(self.classifier_, as_feature_matrix(X, dim=self.classifier_.dim))


class RocchioQueryRefiner(BaseEstimator):
    """Query-vector refinement; scores are cosine similarity to the refined query."""

    def __init__(self, query=None, alpha_q: float = 1.0, beta_rel: float = 0.75,
                 gamma_nonrel: float = 0.15):
        self.query = query
        self.alpha_q = alpha_q
        self.beta_rel = beta_rel
        self.gamma_nonrel = gamma_nonrel

    def fit(self, X, y):
        if self.query is None:
            raise ValueError("RocchioQueryRefiner needs the initial query vector")
        q0 = as_feature_vector(self.query, name="query")
        X = as_feature_matrix(X, dim=q0.size)
        y = as_binary_labels(y, X.shape[0])
        weights = RocchioWeights(self.alpha_q, self.beta_rel, self.gamma_nonrel)
        self.refined_query_ = rocchio_refine(q0, X[y == 1], X[y == 0], weights)
        return self

    def decision_function(self, X) -> np.ndarray:
        _check_fitted(self, "refined_query_")
        return cosine_scores(as_feature_matrix(X, dim=self.refined_query_.size), self.refined_query_)


METHOD_NAMES = ("hc", "lr", "proto", "rocchio")


def build_method(name: str, *, params=None, query=None,
                 adapt_cfg: model.AdaptConfig | None = None,
                 lr_steps: int = 100, lr_lr: float = 0.5, lr_l2: float = 1e-4,
                 rocchio_weights: RocchioWeights = RocchioWeights(),
                 dim: int | None = None, seed: int = 0):
    """Construct the estimator for a named retrieval method."""
    if name == "hc":
        cfg = adapt_cfg or model.AdaptConfig()
        return HyperClassClassifier(
            params=params, steps=cfg.steps, inner_lr=cfg.inner_lr, l2_weight=cfg.l2_weight,
            adapt=cfg.adapt_set, transductive=cfg.transductive,
            entropy_weight=cfg.entropy_weight, full_entropy=cfg.full_entropy,
            dim=dim, seed=seed)
    if name == "lr":
        return GradientLogisticRegression(steps=lr_steps, lr=lr_lr, l2_weight=lr_l2)
    if name == "proto":
        return PositiveCentroidClassifier()
    if name == "rocchio":
        return RocchioQueryRefiner(query=query, alpha_q=rocchio_weights.alpha_q,
                                   beta_rel=rocchio_weights.beta_rel,
                                   gamma_nonrel=rocchio_weights.gamma_nonrel)
    raise ValueError(f"unknown method {name!r}; expected one of {METHOD_NAMES}")
