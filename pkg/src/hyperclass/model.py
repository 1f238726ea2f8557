"""The decomposed linear classifier W = P v + b and its adaptation rules.

``v`` is a global task-agnostic classifier, ``P`` a d x d projection head and
``b`` a bias vector; composing them yields an ordinary linear scorer. Per-task
adaptation runs a few full-batch gradient-descent steps of BCE (+ optional L2)
on a support set, touching only the configured parameter subset. A
transductive variant additionally pushes unlabeled query predictions toward
low entropy. All adaptation math runs in float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .linear import LinearClassifier, log_sigmoid, sigmoid
from .validation import as_binary_labels, as_feature_matrix

PARAM_NAMES = ("v", "P", "b")


@dataclass
class HyperClassParams:
    """Parameter triple (v, P, b); plain data, safe to copy across threads."""

    v: np.ndarray
    P: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        self.P = np.asarray(self.P, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        d = self.v.shape[0]
        if self.P.shape != (d, d):
            raise ValueError(f"P must be {d}x{d}, got {self.P.shape}")
        if self.b.shape[0] != d:
            raise ValueError(f"b must have dimension {d}, got {self.b.shape[0]}")
        for name, arr in (("v", self.v), ("P", self.P), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} contains non-finite values")

    @property
    def dim(self) -> int:
        return self.v.shape[0]

    def copy(self) -> "HyperClassParams":
        return HyperClassParams(self.v.copy(), self.P.copy(), self.b.copy())


def init_params(dim: int, seed: int | np.random.Generator = 0) -> HyperClassParams:
    """Random initialization: v ~ N(0, 1/d), P = I + 0.01*N(0,1), b = 0.

    The identity-dominant P makes the initial update direction coincide with
    plain logistic regression, a sane prior before any meta-training.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    v = rng.standard_normal(dim) / np.sqrt(dim)
    P = np.eye(dim) + 0.01 * rng.standard_normal((dim, dim))
    b = np.zeros(dim)
    return HyperClassParams(v, P, b)


@dataclass(frozen=True)
class AdaptConfig:
    """Inner-loop adaptation settings.

    ``adapt_set`` selects which of v/P/b receive gradient updates; parameters
    outside the set are bit-identical after adaptation. ``entropy_weight`` is
    the weight of the unlabeled entropy term in the transductive loss (the
    supervised term gets the complement; 0.5 weighs both sides equally).
    ``full_entropy`` switches the unlabeled term from -y*log(y) to the full
    binary entropy; off by default.
    """

    steps: int = 5
    inner_lr: float = 0.5
    l2_weight: float = 1e-4
    adapt_set: tuple[str, ...] = ("P", "b")
    transductive: bool = False
    entropy_weight: float = 0.5
    full_entropy: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.steps > 0 and not self.adapt_set:
            raise ValueError("adapt_set must be non-empty when steps > 0")
        unknown = set(self.adapt_set) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown adapt_set entries: {sorted(unknown)}")
        if self.inner_lr <= 0:
            raise ValueError("inner_lr must be positive")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be non-negative")
        if not 0.0 <= self.entropy_weight <= 1.0:
            raise ValueError("entropy_weight must lie in [0, 1]")


@dataclass
class GradientTerms:
    """Analytic gradients of the averaged loss plus per-sample diagnostics.

    ``per_sample_lambda`` is alpha for positives and alpha-1 for negatives,
    with alpha = 1 - sigmoid(W.x); each entry lies in (-1, 1).
    """

    dv: np.ndarray
    dP: np.ndarray
    db: np.ndarray
    per_sample_lambda: np.ndarray
    per_sample_alpha: np.ndarray


def compose(params: HyperClassParams) -> LinearClassifier:
    """W = P v + b, with no scalar intercept (the bias lives inside W)."""
    return LinearClassifier(weights=params.P @ params.v + params.b, bias=None)


def bce_objective(params: HyperClassParams, X, y, l2_weight: float = 0.0) -> float:
    """Mean BCE of sigmoid((Pv+b).x) over the batch, plus l2_weight*(|v|^2+|P|^2+|b|^2)."""
    X = as_feature_matrix(X, dim=params.dim)
    y = as_binary_labels(y, X.shape[0])
    z = X @ (params.P @ params.v + params.b)
    # -log sigmoid(z) for positives, -log sigmoid(-z) for negatives.
    losses = np.where(y == 1, -log_sigmoid(z), -log_sigmoid(-z))
    loss = float(np.mean(losses))
    if l2_weight > 0:
        loss += l2_weight * float(
            np.dot(params.v, params.v) + np.sum(params.P * params.P) + np.dot(params.b, params.b))
    return loss


def grads(params: HyperClassParams, X, y, l2_weight: float = 0.0) -> GradientTerms:
    """Exact average gradients of BCE(+L2) w.r.t. v, P and b.

    Per sample the chain rule gives dv = -lambda P^T x, dP = -lambda x v^T,
    db = -lambda x; averaging over the batch and adding 2*l2_weight*theta.
    """
    X = as_feature_matrix(X, dim=params.dim)
    y = as_binary_labels(y, X.shape[0])
    n = X.shape[0]
    z = X @ (params.P @ params.v + params.b)
    alpha = 1.0 - sigmoid(z)
    lam = np.where(y == 1, alpha, alpha - 1.0)
    g = X.T @ (-lam / n)  # shared factor: sum_i coef_i x_i with coef = -lambda/n
    dv = params.P.T @ g
    dP = np.outer(g, params.v)
    db = g
    if l2_weight > 0:
        dv = dv + 2.0 * l2_weight * params.v
        dP = dP + 2.0 * l2_weight * params.P
        db = db + 2.0 * l2_weight * params.b
    return GradientTerms(dv=dv, dP=dP, db=db, per_sample_lambda=lam, per_sample_alpha=alpha)


def _apply_step(params: HyperClassParams, g: GradientTerms, lr: float,
                adapt_set: tuple[str, ...]) -> HyperClassParams:
    v = params.v - lr * g.dv if "v" in adapt_set else params.v
    P = params.P - lr * g.dP if "P" in adapt_set else params.P
    b = params.b - lr * g.db if "b" in adapt_set else params.b
    return HyperClassParams(v, P, b)


def adapt(params: HyperClassParams, X, y, cfg: AdaptConfig) -> HyperClassParams:
    """Full-batch gradient descent on the support set.

    Returns new parameters; entries outside cfg.adapt_set are bit-identical
    to the input (the arrays are reused, not copied).
    """
    X = as_feature_matrix(X, dim=params.dim)
    y = as_binary_labels(y, X.shape[0])
    out = params
    for _ in range(cfg.steps):
        g = grads(out, X, y, cfg.l2_weight)
        out = _apply_step(out, g, cfg.inner_lr, cfg.adapt_set)
        if not np.all(np.isfinite(out.P @ out.v + out.b)):
            raise FloatingPointError("adaptation produced non-finite parameters")
    return out


def transductive_objective(params: HyperClassParams, X_pos, X_unlabeled,
                           l2_weight: float = 0.0, entropy_weight: float = 0.5,
                           full_entropy: bool = False) -> float:
    """Supervised positive log-likelihood plus unlabeled entropy pressure.

    L = -(w_s/n) sum log y_s - (w_q/m) sum y_q log y_q, with w_q =
    entropy_weight and w_s = 1 - entropy_weight; ``full_entropy`` adds the
    -(1-y)log(1-y) counterpart to the unlabeled term.
    """
    Xs = as_feature_matrix(X_pos, dim=params.dim, name="support")
    Xq = as_feature_matrix(X_unlabeled, dim=params.dim, name="unlabeled")
    W = params.P @ params.v + params.b
    zs = Xs @ W
    zq = Xq @ W
    w_q = entropy_weight
    w_s = 1.0 - entropy_weight
    loss = -w_s * float(np.mean(log_sigmoid(zs)))
    p = sigmoid(zq)
    unl = p * log_sigmoid(zq)
    if full_entropy:
        unl = unl + (1.0 - p) * log_sigmoid(-zq)
    loss += -w_q * float(np.mean(unl))
    if l2_weight > 0:
        loss += l2_weight * float(
            np.dot(params.v, params.v) + np.sum(params.P * params.P) + np.dot(params.b, params.b))
    return loss


def transductive_grads(params: HyperClassParams, X_pos, X_unlabeled,
                       l2_weight: float = 0.0, entropy_weight: float = 0.5,
                       full_entropy: bool = False) -> GradientTerms:
    """Analytic gradients of ``transductive_objective``.

    d/dz of the unlabeled term -p log p is -p(1-p)(log p + 1); the supervised
    positive term contributes -(1-p) per sample. Both route through the same
    parameter chain as the plain BCE gradients.
    """
    Xs = as_feature_matrix(X_pos, dim=params.dim, name="support")
    Xq = as_feature_matrix(X_unlabeled, dim=params.dim, name="unlabeled")
    n, m = Xs.shape[0], Xq.shape[0]
    W = params.P @ params.v + params.b
    w_q = entropy_weight
    w_s = 1.0 - entropy_weight

    zs = Xs @ W
    alpha_s = 1.0 - sigmoid(zs)
    dz_s = -w_s * alpha_s / n

    zq = Xq @ W
    p = sigmoid(zq)
    dz_q = -w_q * (p * (1.0 - p) * (log_sigmoid(zq) + 1.0)) / m
    if full_entropy:
        dz_q = dz_q - w_q * (-(p * (1.0 - p)) * (log_sigmoid(-zq) + 1.0)) / m

    g = Xs.T @ dz_s + Xq.T @ dz_q
    dv = params.P.T @ g
    dP = np.outer(g, params.v)
    db = g
    if l2_weight > 0:
        dv = dv + 2.0 * l2_weight * params.v
        dP = dP + 2.0 * l2_weight * params.P
        db = db + 2.0 * l2_weight * params.b
    lam = np.concatenate([alpha_s, np.zeros(m)])
    return GradientTerms(dv=dv, dP=dP, db=db, per_sample_lambda=lam,
                         per_sample_alpha=np.concatenate([alpha_s, 1.0 - p]))


def adapt_transductive(params: HyperClassParams, X_pos, X_unlabeled,
                       cfg: AdaptConfig) -> HyperClassParams:
    """Gradient steps on the combined supervised + unlabeled-entropy loss."""
    Xs = as_feature_matrix(X_pos, dim=params.dim, name="support")
    Xq = as_feature_matrix(X_unlabeled, dim=params.dim, name="unlabeled")
    out = params
    for _ in range(cfg.steps):
        g = transductive_grads(out, Xs, Xq, cfg.l2_weight, cfg.entropy_weight, cfg.full_entropy)
        out = _apply_step(out, g, cfg.inner_lr, cfg.adapt_set)
        if not np.all(np.isfinite(out.P @ out.v + out.b)):
            raise FloatingPointError("transductive adaptation produced non-finite parameters")
    return out


@dataclass
class FsorHeads:
    """One projection head per support class over a shared global classifier."""

    shared_v: np.ndarray
    per_class_P: list[np.ndarray]
    per_class_b: list[np.ndarray]

    def __post_init__(self):
        if not self.per_class_P:
            raise ValueError("FsorHeads needs at least one head")
        if len(self.per_class_P) != len(self.per_class_b):
            raise ValueError("per_class_P and per_class_b must have equal length")
        self.shared_v = np.asarray(self.shared_v, dtype=np.float64).reshape(-1)
        d = self.shared_v.shape[0]
        for P, b in zip(self.per_class_P, self.per_class_b):
            if P.shape != (d, d) or np.asarray(b).reshape(-1).shape[0] != d:
                raise ValueError("all heads must share the classifier dimension")

    @property
    def n_heads(self) -> int:
        return len(self.per_class_P)


def fsor_in_set_score(heads: FsorHeads, X) -> np.ndarray:
    """In-set probability: max over heads of sigmoid((P_c v + b_c).x)."""
    X = as_feature_matrix(X, dim=heads.shared_v.shape[0])
    scores = np.empty((heads.n_heads, X.shape[0]))
    for i, (P, b) in enumerate(zip(heads.per_class_P, heads.per_class_b)):
        scores[i] = sigmoid(X @ (P @ heads.shared_v + b))
    return scores.max(axis=0)


# -- checkpoint persistence ---------------------------------------------------

CHECKPOINT_FORMAT = "hyperclass-checkpoint/v1"


@dataclass
class Checkpoint:
    """Trained initialization plus provenance for replay."""

    params: HyperClassParams
    config: dict
    best_validation_score: float
    meta_batch_index: int


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Single-file format: one JSON header line, then f32le blobs for v, P, b.

    Written atomically (temp file + rename). Parameters are truncated to
    float32 on disk; save -> load -> save is byte-identical.
    """
    path = Path(path)
    d = ckpt.params.dim
    header = {
        "format": CHECKPOINT_FORMAT,
        "dim": d,
        "best_validation_score": ckpt.best_validation_score,
        "meta_batch_index": ckpt.meta_batch_index,
        "config": ckpt.config,
    }
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes()
        for arr in (ckpt.params.v, ckpt.params.P, ckpt.params.b)
    )
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
    d = int(header["dim"])
    expected = (d + d * d + d) * 4
    if len(blob) != expected:
        raise ValueError(f"checkpoint blob is {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f4")
    v = flat[:d].astype(np.float64)
    P = flat[d:d + d * d].astype(np.float64).reshape(d, d)
    b = flat[d + d * d:].astype(np.float64)
    return Checkpoint(
        params=HyperClassParams(v, P, b),
        config=header.get("config", {}),
        best_validation_score=float(header["best_validation_score"]),
        meta_batch_index=int(header["meta_batch_index"]),
    )


def with_adapt_set(cfg: AdaptConfig, adapt_set: tuple[str, ...]) -> AdaptConfig:
    return replace(cfg, adapt_set=tuple(adapt_set))


def resolve_params(params, dim: int | None = None, seed: int = 0) -> HyperClassParams:
    """Accept HyperClassParams, a Checkpoint, a checkpoint path, or None
    (seeded random init; ``dim`` then required)."""
    if params is None:
        if dim is None:
            raise ValueError("dim is required to build a random initialization")
        return init_params(dim, seed)
    if isinstance(params, (str, Path)):
        params = load_checkpoint(params)
    if isinstance(params, Checkpoint):
        return params.params
    if not isinstance(params, HyperClassParams):
        raise TypeError(f"cannot interpret {type(params).__name__} as classifier parameters")
    return params
