"""Numerical checks of the closed-form update-scheme results.

Verified claims, each over many random trials in float64:

* one logistic-regression gradient step equals its closed form and stays in
  the span of the support features;
* the single-sample first step of the decomposed classifier equals
  lambda*P0 P0^T x + C x with C = lambda*(|v0|^2 + 1) + lambda^2 * v0^T P0^T x,
  and reduces to a support-direction update when P0 is orthogonal;
* after k steps the classifier change fits five term families built from the
  initial state and the (zero-centered) support second moments;
* analytic gradients match central finite differences for the plain,
  L2-regularized and transductive objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .baselines import lr_fit
from .linear import sigmoid

IDENTITY_TOL = 1e-10
SPAN_TOL = 1e-8
LSTSQ_TOL = 1e-6
FD_TOL = 1e-6
FD_STEP = 1e-5


@dataclass
class TheoryCheckReport:
    """Residual distribution of one check over its trials."""

    name: str
    residual_max: float
    residual_median: float
    tolerance: float
    passed: bool
    trials: int
    dim: int
    seed: int

    @classmethod
    def from_residuals(cls, name: str, residuals, tolerance: float,
                       dim: int, seed: int) -> "TheoryCheckReport":
        arr = np.asarray(residuals, dtype=np.float64)
        worst = float(arr.max())
        return cls(name=name, residual_max=worst, residual_median=float(np.median(arr)),
                   tolerance=tolerance, passed=bool(worst <= tolerance),
                   trials=arr.size, dim=dim, seed=seed)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "residual_max": self.residual_max,
            "residual_median": self.residual_median, "tolerance": self.tolerance,
            "passed": self.passed, "trials": self.trials, "dim": self.dim,
            "seed": self.seed,
        }


@dataclass
class KStepDecomposition:
    """Least-squares fit of the k-step classifier change onto the five term
    families {W0, P0 P0^T X^T, X^T, XX^T W0, XX^T P0 P0^T X^T}.

    ``base_coefficient`` is the fitted weight on the W0 column (drifts from
    0 once k > 1), ``reduced_residual`` is the same fit without the two
    second-moment families.
    """

    family_names: tuple[str, ...]
    base_coefficient: float
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: float
    beta4: np.ndarray
    relative_residual: float
    reduced_residual: float
    condition_number: float


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    x = rng.standard_normal(dim)
    return x / np.linalg.norm(x)


def _span_residual(vectors: np.ndarray, target: np.ndarray) -> float:
    """Norm of target's component orthogonal to the row span of ``vectors``,
    relative to |target|."""
    coeffs, *_ = np.linalg.lstsq(vectors.T, target, rcond=None)
    resid = target - vectors.T @ coeffs
    denom = np.linalg.norm(target)
    return float(np.linalg.norm(resid) / denom) if denom else 0.0


def check_lr_update(dim: int = 16, trials: int = 200, seed: int = 0) -> list[TheoryCheckReport]:
    """One LR gradient step equals its closed form; the change stays in the
    support span."""
    if dim < 2:
        raise ValueError("dim must be >= 2 for an informative span check")
    rng = np.random.default_rng(seed)
    id_res, span_res = [], []
    for _ in range(trials):
        s = int(rng.integers(1, dim))  # support smaller than dim keeps the span proper
        X = np.stack([_unit(rng, dim) for _ in range(s)])
        y = rng.integers(0, 2, size=s)
        W0 = _unit(rng, dim)
        # one explicit GD step at unit learning rate
        p = sigmoid(X @ W0)
        W1 = W0 - (X.T @ (p - y)) / s
        delta = W1 - W0
        alpha = 1.0 - p
        lam = np.where(y == 1, alpha, alpha - 1.0)
        formula = (X.T @ lam) / s
        id_res.append(float(np.linalg.norm(delta - formula)))
        span_res.append(_span_residual(X, delta))
    return [
        TheoryCheckReport.from_residuals("lr-step-closed-form", id_res, IDENTITY_TOL, dim, seed),
        TheoryCheckReport.from_residuals("lr-step-support-span", span_res, SPAN_TOL, dim, seed),
    ]


def _first_step_delta(params: model.HyperClassParams, x: np.ndarray, label: int) -> np.ndarray:
    cfg = model.AdaptConfig(steps=1, inner_lr=1.0, l2_weight=0.0, adapt_set=("v", "P", "b"))
    adapted = model.adapt(params, x.reshape(1, -1), np.asarray([label]), cfg)
    return model.compose(adapted).weights - model.compose(params).weights


def check_hc_first_step(dim: int = 16, trials: int = 200, seed: int = 0) -> list[TheoryCheckReport]:
    """Single-sample first step of the decomposed classifier.

    Checks the closed form, the out-of-span component against the projection
    term alone, and colinearity with the sample when P0 is orthogonal."""
    rng = np.random.default_rng(seed)
    id_res, span_res, ortho_res = [], [], []
    for _ in range(trials):
        x = _unit(rng, dim)
        label = int(rng.integers(0, 2))
        v0 = rng.standard_normal(dim) / np.sqrt(dim)
        P0 = np.eye(dim) + 0.1 * rng.standard_normal((dim, dim))
        b0 = 0.01 * rng.standard_normal(dim)
        params = model.HyperClassParams(v0, P0, b0)
        W0 = model.compose(params).weights
        alpha = 1.0 - sigmoid(float(W0 @ x))
        lam = alpha if label == 1 else alpha - 1.0

        delta = _first_step_delta(params, x, label)
        C = lam * (float(v0 @ v0) + 1.0) + lam ** 2 * float(v0 @ (P0.T @ x))
        formula = lam * (P0 @ (P0.T @ x)) + C * x
        id_res.append(float(np.linalg.norm(delta - formula)))

        # out-of-span parts of the observed step and of the projection term agree
        proj = lam * (P0 @ (P0.T @ x))
        out_delta = delta - (delta @ x) * x
        out_proj = proj - (proj @ x) * x
        span_res.append(float(np.linalg.norm(out_delta - out_proj)))

        # orthogonal P0: the step must be colinear with the sample
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        params_q = model.HyperClassParams(v0, Q, b0)
        delta_q = _first_step_delta(params_q, x, label)
        sin_angle = np.linalg.norm(delta_q - (delta_q @ x) * x) / np.linalg.norm(delta_q)
        ortho_res.append(float(sin_angle))
    return [
        TheoryCheckReport.from_residuals("hc-first-step-closed-form", id_res, IDENTITY_TOL, dim, seed),
        TheoryCheckReport.from_residuals("hc-first-step-out-of-span", span_res, SPAN_TOL, dim, seed),
        TheoryCheckReport.from_residuals("hc-orthogonal-colinearity", ortho_res, SPAN_TOL, dim, seed),
    ]


def check_kstep_span(dim: int = 16, support_size: int = 4, k: int = 2,
                     trials: int = 100, seed: int = 0,
                     max_redraws: int = 5) -> list[KStepDecomposition]:
    """Fit the k-step classifier change onto the five term families.

    Support features are zero-centered before adaptation so the second-moment
    families use centered statistics. Rank-deficient draws (beyond the
    structural redundancy of the second-moment families) are redrawn.
    """
    if not 1 <= k <= 5:
        raise ValueError("k must lie in 1..5")
    if support_size >= dim:
        raise ValueError("support_size must be < dim for an informative span test")
    rng = np.random.default_rng(seed)
    cfg = model.AdaptConfig(steps=k, inner_lr=1.0, l2_weight=0.0, adapt_set=("v", "P", "b"))
    results = []
    for _ in range(trials):
        for _attempt in range(max_redraws):
            X = rng.standard_normal((support_size, dim))
            X = X - X.mean(axis=0)
            y = rng.integers(0, 2, size=support_size)
            if y.sum() == 0:
                y[0] = 1
            v0 = rng.standard_normal(dim) / np.sqrt(dim)
            P0 = rng.standard_normal((dim, dim)) / np.sqrt(dim)
            params = model.HyperClassParams(v0, P0, np.zeros(dim))
            W0 = model.compose(params).weights

            proj = P0 @ P0.T @ X.T          # d x s
            second = X.T @ X                # sum of x x^T
            fam_w0 = W0.reshape(-1, 1)
            fam_cov_w0 = (second @ W0).reshape(-1, 1)
            fam_cov_proj = second @ proj
            basis_full = np.hstack([fam_w0, proj, X.T, fam_cov_w0, fam_cov_proj])
            basis_reduced = np.hstack([fam_w0, proj, X.T])
            informative_rank = np.linalg.matrix_rank(basis_reduced)
            if informative_rank < min(2 * support_size + 1, dim):
                continue  # degenerate draw, retry

            adapted = model.adapt(params, X, y, cfg)
            delta = model.compose(adapted).weights - W0

            coef, *_ = np.linalg.lstsq(basis_full, delta, rcond=None)
            resid = float(np.linalg.norm(delta - basis_full @ coef) / np.linalg.norm(delta))
            coef_red, *_ = np.linalg.lstsq(basis_reduced, delta, rcond=None)
            resid_red = float(np.linalg.norm(delta - basis_reduced @ coef_red) / np.linalg.norm(delta))
            svals = np.linalg.svd(basis_full, compute_uv=False)
            positive = svals[svals > svals.max() * 1e-15]
            s = support_size
            results.append(KStepDecomposition(
                family_names=("W0", "P0 P0^T X^T", "X^T", "XX^T W0", "XX^T P0 P0^T X^T"),
                base_coefficient=float(coef[0]),
                beta1=coef[1:1 + s].copy(),
                beta2=coef[1 + s:1 + 2 * s].copy(),
                beta3=float(coef[1 + 2 * s]),
                beta4=coef[2 + 2 * s:].copy(),
                relative_residual=resid,
                reduced_residual=resid_red,
                condition_number=float(positive.max() / positive.min()),
            ))
            break
        else:
            raise RuntimeError("could not draw a full-rank support basis")
    return results


def _fd_grads(objective, params: model.HyperClassParams, h: float = FD_STEP) -> dict[str, np.ndarray]:
    """Central finite differences over every entry of v, P and b."""
    out = {}
    for name in model.PARAM_NAMES:
        base = getattr(params, name)
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = objective(params)
            flat[i] = orig - h
            lo = objective(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        out[name] = g
    return out


def _rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    denom = max(np.linalg.norm(fd), 1e-12)
    return float(np.linalg.norm(analytic - fd) / denom)


def gradcheck_all(dim: int = 16, trials: int = 20, seed: int = 0,
                  l2_weight: float = 1e-3) -> list[TheoryCheckReport]:
    """Analytic gradients vs central differences for the three objectives."""
    if dim > 16:
        raise ValueError("finite differences are sized for dim <= 16")
    rng = np.random.default_rng(seed)
    res = {"bce": [], "bce-l2": [], "transductive": []}
    for _ in range(trials):
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        X = np.stack([_unit(rng, dim) for _ in range(n)])
        y = rng.integers(0, 2, size=n)
        Xq = np.stack([_unit(rng, dim) for _ in range(m)])
        params = model.HyperClassParams(
            rng.standard_normal(dim) / np.sqrt(dim),
            np.eye(dim) + 0.1 * rng.standard_normal((dim, dim)),
            0.1 * rng.standard_normal(dim))

        for key, l2 in (("bce", 0.0), ("bce-l2", l2_weight)):
            g = model.grads(params, X, y, l2)
            fd = _fd_grads(lambda p: model.bce_objective(p, X, y, l2), params)
            res[key].append(max(_rel_err(g.dv, fd["v"]), _rel_err(g.dP, fd["P"]),
                                _rel_err(g.db, fd["b"])))

        Xs = X[y == 1] if y.sum() else X[:1]
        g = model.transductive_grads(params, Xs, Xq)
        fd = _fd_grads(lambda p: model.transductive_objective(p, Xs, Xq), params)
        res["transductive"].append(max(_rel_err(g.dv, fd["v"]), _rel_err(g.dP, fd["P"]),
                                       _rel_err(g.db, fd["b"])))
    return [
        TheoryCheckReport.from_residuals(f"gradcheck-{k}", v, FD_TOL, dim, seed)
        for k, v in res.items()
    ]


def run_all_checks(dim: int = 16, trials: int = 200, seed: int = 0,
                   fd_trials: int | None = None,
                   kstep_trials: int | None = None) -> dict:
    """Full battery; returns reports plus the k-step decompositions summary."""
    fd_trials = fd_trials if fd_trials is not None else max(10, trials // 10)
    kstep_trials = kstep_trials if kstep_trials is not None else max(20, trials // 4)
    reports: list[TheoryCheckReport] = []
    reports += check_lr_update(dim, trials, seed)
    reports += check_hc_first_step(dim, trials, seed)
    reports += gradcheck_all(dim, fd_trials, seed)

    kstep = {}
    for k in (1, 2, 3, 4, 5):
        decomps = check_kstep_span(dim=dim, support_size=min(4, dim - 1), k=k,
                                   trials=kstep_trials, seed=seed)
        residuals = [d.relative_residual for d in decomps]
        tol = IDENTITY_TOL if k == 1 else LSTSQ_TOL
        reports.append(TheoryCheckReport.from_residuals(
            f"kstep-span-k{k}", residuals, tol, dim, seed))
        kstep[k] = {
            "residuals": residuals,
            "reduced_residuals": [d.reduced_residual for d in decomps],
            "reduced_strictly_larger": int(sum(
                d.reduced_residual > d.relative_residual for d in decomps)),
            "trials": len(decomps),
        }
    return {"reports": reports, "kstep": kstep}


def format_report_table(reports: list[TheoryCheckReport]) -> str:
    lines = [f"{'check':34s} {'max resid':>12s} {'median':>12s} {'tol':>9s} {'trials':>6s} pass"]
    for r in reports:
        lines.append(f"{r.name:34s} {r.residual_max:12.3e} {r.residual_median:12.3e} "
                     f"{r.tolerance:9.0e} {r.trials:6d} {'yes' if r.passed else 'NO'}")
    return "\n".join(lines)
