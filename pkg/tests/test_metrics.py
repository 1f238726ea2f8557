"""Metric correctness against independent brute-force references.

The oracles below re-derive each metric directly from its definition
(explicit loops, no shared code with the implementations) and were used to
freeze the expected values in the example-based tests.
"""

import numpy as np
import pytest

from hyperclass.metrics import (EpisodeReport, auroc, average_precision,
                                f1_and_acc, mean_std_ci, precision_at_k,
                                ranking_order, sweep_threshold)


def brute_force_ap(scores, labels):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    n_pos = 0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            n_pos += 1
            total += hits / rank
    return total / n_pos


def brute_force_p_at_k(scores, labels, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sum(labels[i] for i in order[:k]) / k


def brute_force_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestAveragePrecision:
    def test_ranked_half_example(self):
        # labels in rank order [1,0,1,0] -> (1/1 + 2/3)/2 = 5/6
        scores = [4.0, 3.0, 2.0, 1.0]
        labels = [1, 0, 1, 0]
        assert average_precision(scores, labels) == pytest.approx(5.0 / 6.0, abs=1e-12)
        assert brute_force_ap(scores, labels) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_all_positives_first(self):
        assert average_precision([3, 2, 1], [1, 1, 0]) == 1.0

    def test_no_positives_rejected(self):
        with pytest.raises(ValueError):
            average_precision([1.0, 2.0], [0, 0])

    def test_tie_break_by_original_index(self):
        # equal scores: stable order keeps index order, so the positive at
        # index 0 ranks first
        assert average_precision([1.0, 1.0], [1, 0]) == 1.0
        assert average_precision([1.0, 1.0], [0, 1]) == 0.5


class TestPrecisionAtK:
    def test_top_k_all_positive(self):
        scores = np.arange(100, 0, -1, dtype=float)
        labels = np.concatenate([np.ones(50, dtype=int), np.zeros(50, dtype=int)])
        assert precision_at_k(scores, labels, 50) == 1.0

    def test_alternating(self):
        scores = np.arange(100, 0, -1, dtype=float)
        labels = np.tile([1, 0], 50)
        assert precision_at_k(scores, labels, 50) == 0.5

    def test_short_corpus_divides_by_k(self):
        # 40 items, all positive, k=50 -> 40/50
        assert precision_at_k(np.arange(40, 0, -1, dtype=float), np.ones(40, dtype=int), 50) == pytest.approx(0.8)

    def test_k_positive(self):
        with pytest.raises(ValueError):
            precision_at_k([1.0], [1], 0)


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_tied(self):
        assert auroc([0.5] * 10, [1, 0] * 5) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auroc([0.1, 0.2], [1, 1])

    def test_matches_pair_counting(self, rng):
        # quantized scores so ties actually occur
        for _ in range(200):
            n = int(rng.integers(2, 33))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            scores = np.round(rng.random(n), 1)
            assert auroc(scores, labels) == pytest.approx(
                brute_force_auroc(scores.tolist(), labels.tolist()), abs=1e-12)


class TestF1AndAcc:
    def test_perfect(self):
        f1, acc = f1_and_acc([0.9, 0.1], [1, 0], 0.5)
        assert f1 == 1.0 and acc == 1.0

    def test_all_predicted_negative(self):
        f1, acc = f1_and_acc([0.1, 0.2], [1, 0], 0.5)
        assert f1 == 0.0
        assert acc == 0.5

    def test_threshold_is_inclusive(self):
        f1, acc = f1_and_acc([0.5], [1], 0.5)
        assert f1 == 1.0 and acc == 1.0


class TestThresholdSweep:
    def test_separable_threshold_between_clusters(self, rng):
        episodes = []
        for _ in range(10):
            pos = 0.8 + 0.05 * rng.random(8)
            neg = 0.2 + 0.05 * rng.random(8)
            scores = np.concatenate([pos, neg])
            labels = np.concatenate([np.ones(8, dtype=int), np.zeros(8, dtype=int)])
            episodes.append((scores, labels))
        t, best = sweep_threshold(episodes, "f1")
        assert 0.25 < t < 0.8
        assert best == 1.0

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            sweep_threshold([], "auc")


class TestAggregates:
    def test_mean_std_ci(self):
        mean, std, ci = mean_std_ci([1.0, 2.0, 3.0])
        assert mean == 2.0
        assert std == pytest.approx(1.0)
        assert ci == pytest.approx(1.96 / np.sqrt(3))

    def test_single_value(self):
        mean, std, ci = mean_std_ci([4.0])
        assert (mean, std, ci) == (4.0, 0.0, 0.0)

    def test_episode_report(self):
        rep = EpisodeReport.from_values("auroc", [0.5, 0.6, 0.7], threshold=0.4)
        assert rep.episodes == 3
        assert rep.ci95 >= 0
        d = rep.to_dict()
        assert d["metric"] == "auroc" and d["threshold"] == 0.4


def test_ranking_order_stable():
    order = ranking_order([1.0, 2.0, 2.0, 0.5])
    assert order.tolist() == [1, 2, 0, 3]
