"""Ranking and detection metrics with a fixed, reproducible sort rule.

Every metric sorts by descending score with ties broken by ascending original
index, so results are bit-reproducible across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def ranking_order(scores) -> np.ndarray:
    """Indices sorted by descending score, ties by ascending original index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, kind="stable")


def average_precision(scores, labels) -> float:
    """Mean over positive ranks r of (positives within top r) / r."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    order = ranking_order(scores)
    rel = labels[order].astype(np.float64)
    n_pos = rel.sum()
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")
    cum = np.cumsum(rel)
    ranks = np.arange(1, rel.size + 1)
    return float(np.sum((cum / ranks) * rel) / n_pos)


def precision_at_k(scores, labels, k: int) -> float:
    """Positives among the top k, divided by k even when fewer items exist."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = ranking_order(scores)[:k]
    return float(labels[order].sum() / k)


def auroc(scores, labels) -> float:
    """Mann-Whitney statistic: (#pairs pos>neg + 0.5 * ties) / (P * N)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both positive and negative labels")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def f1_and_acc(scores, labels, threshold: float) -> tuple[float, float]:
    """F1 of the positive class and accuracy at ``scores >= threshold``.

    F1 is 0 when there are no predicted or no true positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pred = scores >= threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    acc = float(np.mean(pred == labels))
    if tp == 0:
        return 0.0, acc
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall), acc


def sweep_threshold(episode_scores: list[tuple[np.ndarray, np.ndarray]],
                    metric: str = "f1", points: int = 101) -> tuple[float, float]:
    """Pick the threshold maximizing the mean per-episode metric.

    Sweeps ``points`` evenly spaced thresholds over [0, 1]; ties resolve to
    the lowest threshold.
    """
    if metric not in ("f1", "acc"):
        raise ValueError(f"unknown threshold metric {metric!r}")
    grid = np.linspace(0.0, 1.0, points)
    best_t, best_val = 0.0, -1.0
    for t in grid:
        vals = []
        for scores, labels in episode_scores:
            f1, acc = f1_and_acc(scores, labels, float(t))
            vals.append(f1 if metric == "f1" else acc)
        mean = float(np.mean(vals))
        if mean > best_val:
            best_t, best_val = float(t), mean
    return best_t, best_val


def mean_std_ci(values) -> tuple[float, float, float]:
    """Sample mean, std (ddof=1, 0 for a single value) and 1.96*std/sqrt(n)."""
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std, 1.96 * std / np.sqrt(arr.size)


@dataclass
class EpisodeReport:
    """Aggregate of one metric over many episodes."""

    metric: str
    mean: float
    std: float
    ci95: float
    episodes: int
    threshold: float | None = None

    @classmethod
    def from_values(cls, metric: str, values, threshold: float | None = None) -> "EpisodeReport":
        mean, std, ci = mean_std_ci(values)
        return cls(metric=metric, mean=mean, std=std, ci95=ci,
                   episodes=len(values), threshold=threshold)

    def to_dict(self) -> dict:
        out = {"metric": self.metric, "mean": self.mean, "std": self.std,
               "ci95": self.ci95, "episodes": self.episodes}
        if self.threshold is not None:
            out["threshold"] = self.threshold
        return out
