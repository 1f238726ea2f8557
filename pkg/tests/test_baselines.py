"""Baseline classifiers: centroid, scratch LR, Rocchio refinement."""

import numpy as np
import pytest

from hyperclass.baselines import RocchioWeights, lr_fit, proto_fit, rocchio_refine
from hyperclass.linear import score
from hyperclass.metrics import ranking_order


class TestProto:
    def test_two_basis_vectors(self):
        X = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        clf = proto_fit(X)
        assert clf.weights == pytest.approx([0.5, 0.5, 0.0])

    def test_single_sample(self, rng):
        x = rng.standard_normal(4)
        assert proto_fit(x.reshape(1, -1)).weights == pytest.approx(x)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            proto_fit(np.zeros((0, 3)))

    def test_ranking_invariant_to_positive_rescale(self, rng):
        X = rng.standard_normal((30, 5))
        clf = proto_fit(rng.standard_normal((4, 5)))
        scaled = clf.weights * 7.5
        assert np.array_equal(ranking_order(X @ clf.weights), ranking_order(X @ scaled))


class TestLrFit:
    def test_one_step_closed_form(self, rng):
        # from W=0 every alpha is 0.5: delta W = lr * (0.5 sum_pos x - 0.5 sum_neg x)/n
        X = rng.standard_normal((6, 4))
        y = np.array([1, 1, 1, 0, 0, 0])
        clf = lr_fit(X, y, steps=1, lr=1.0, l2_weight=0.0)
        expected = (0.5 * X[y == 1].sum(axis=0) - 0.5 * X[y == 0].sum(axis=0)) / 6
        assert clf.weights == pytest.approx(expected, abs=1e-12)

    def test_zero_steps_zero_classifier(self, rng):
        clf = lr_fit(rng.standard_normal((4, 3)), [1, 0, 1, 0], steps=0)
        assert np.all(clf.weights == 0.0) and clf.bias == 0.0
        assert score(clf, rng.standard_normal(3)) == 0.5

    def test_separable_one_dimensional(self):
        X = np.array([[1.0], [1.0], [-1.0], [-1.0]])
        y = np.array([1, 1, 0, 0])
        clf = lr_fit(X, y, steps=200, lr=0.5)
        assert score(clf, np.array([1.0])) > 0.5 > score(clf, np.array([-1.0]))

    def test_l2_shrinkage_monotone(self, rng):
        for _ in range(10):
            X = rng.standard_normal((8, 3))
            y = rng.integers(0, 2, 8)
            if len(set(y.tolist())) < 2:
                y[0] = 1 - y[1]
            strong = lr_fit(X, y, steps=50, lr=0.5, l2_weight=0.1)
            weak = lr_fit(X, y, steps=50, lr=0.5, l2_weight=0.0)
            assert np.linalg.norm(strong.weights) <= np.linalg.norm(weak.weights) + 1e-12

    def test_deterministic(self, rng):
        X = rng.standard_normal((6, 4))
        y = rng.integers(0, 2, 6)
        a = lr_fit(X, y)
        b = lr_fit(X, y)
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            lr_fit(np.zeros((0, 3)), [])


class TestRocchio:
    def test_empty_feedback_scales_query(self, rng):
        q = rng.standard_normal(4)
        out = rocchio_refine(q, np.zeros((0, 4)), np.zeros((0, 4)),
                             RocchioWeights(alpha_q=0.9))
        assert out == pytest.approx(0.9 * q)

    def test_zero_feedback_weights(self, rng):
        q = rng.standard_normal(4)
        out = rocchio_refine(q, rng.standard_normal((3, 4)), rng.standard_normal((2, 4)),
                             RocchioWeights(alpha_q=1.0, beta_rel=0.0, gamma_nonrel=0.0))
        assert out == pytest.approx(q)

    def test_pure_relevant_pull(self):
        out = rocchio_refine(np.zeros(3), np.array([[1.0, 0.0, 0.0]]), np.zeros((0, 3)),
                             RocchioWeights(alpha_q=1.0, beta_rel=1.0, gamma_nonrel=0.0))
        assert out == pytest.approx([1.0, 0.0, 0.0])

    def test_linear_in_each_input(self, rng):
        q = rng.standard_normal(3)
        rel = rng.standard_normal((4, 3))
        non = rng.standard_normal((2, 3))
        w = RocchioWeights()
        base = rocchio_refine(q, rel, non, w)
        assert rocchio_refine(2 * q, rel, non, w) == pytest.approx(base + w.alpha_q * q)
        assert rocchio_refine(q, 2 * rel, non, w) == pytest.approx(base + w.beta_rel * rel.mean(axis=0))
        assert rocchio_refine(q, rel, 2 * non, w) == pytest.approx(base - w.gamma_nonrel * non.mean(axis=0))

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            RocchioWeights(alpha_q=float("nan"))
