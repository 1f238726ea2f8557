"""Linear-core primitives: sigmoid, BCE, scoring, cosine."""

import math

import numpy as np
import pytest

from hyperclass.linear import (LinearClassifier, bce_loss, cosine_scores,
                               decision, log_sigmoid, score, sigmoid)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_log_three_identity(self):
        assert sigmoid(math.log(3)) == pytest.approx(0.75, abs=1e-12)
        assert sigmoid(-math.log(3)) == pytest.approx(0.25, abs=1e-12)

    def test_stable_at_large_magnitudes(self):
        assert sigmoid(1000.0) == 1.0
        assert sigmoid(-1000.0) > 0.0
        with np.errstate(over="raise"):
            sigmoid(np.array([-1e3, 1e3]))

    def test_monotone(self, rng):
        z = np.sort(rng.standard_normal(100) * 10)
        out = sigmoid(z)
        assert np.all(np.diff(out) >= 0)

    def test_array_shape(self):
        assert sigmoid(np.zeros((3, 2))).shape == (3, 2)


class TestLogSigmoid:
    def test_matches_naive_in_safe_range(self, rng):
        z = rng.standard_normal(50) * 5
        assert log_sigmoid(z) == pytest.approx(np.log(sigmoid(z)), abs=1e-12)

    def test_no_underflow(self):
        assert log_sigmoid(-800.0) == pytest.approx(-800.0)
        assert log_sigmoid(800.0) == 0.0


class TestBce:
    def test_half(self):
        assert bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_prediction(self):
        assert bce_loss(1.0, 1) == pytest.approx(0.0, abs=1e-9)

    def test_worst_case_clamped(self):
        # clamp eps = 1e-12 keeps the loss finite: -log(1e-12)
        assert bce_loss(0.0, 1) == pytest.approx(-math.log(1e-12), rel=1e-12)
        assert bce_loss(1.0, 0) == pytest.approx(-math.log(1e-12), rel=1e-12)

    def test_finite_everywhere(self, rng):
        p = rng.random(100)
        y = rng.integers(0, 2, 100)
        assert np.all(np.isfinite(bce_loss(p, y)))


class TestScore:
    def test_zero_weights(self):
        clf = LinearClassifier(weights=np.zeros(4))
        assert score(clf, np.ones(4)) == 0.5

    def test_composes_with_sigmoid_identity(self):
        clf = LinearClassifier(weights=np.array([math.log(3), 0.0]))
        assert score(clf, np.array([1.0, 0.0])) == pytest.approx(0.75, abs=1e-12)

    def test_dimension_mismatch(self):
        clf = LinearClassifier(weights=np.zeros(4))
        with pytest.raises(ValueError, match="dimension"):
            score(clf, np.ones(5))

    def test_bias_applied(self):
        clf = LinearClassifier(weights=np.zeros(2), bias=math.log(3))
        assert score(clf, np.zeros(2)) == pytest.approx(0.75, abs=1e-12)

    def test_matrix_input(self, rng):
        clf = LinearClassifier(weights=rng.standard_normal(3))
        X = rng.standard_normal((10, 3))
        assert score(clf, X).shape == (10,)

    def test_non_finite_weights_rejected(self):
        with pytest.raises(ValueError):
            LinearClassifier(weights=np.array([np.nan, 1.0]))

    def test_monotone_in_logit(self, rng):
        clf = LinearClassifier(weights=rng.standard_normal(4))
        X = rng.standard_normal((50, 4))
        z = decision(clf, X)
        s = score(clf, X)
        order = np.argsort(z)
        assert np.all(np.diff(s[order]) >= 0)


class TestDotProductAccumulation:
    def test_float32_storage_with_float64_accumulation(self, rng):
        # storage dtype f32, accumulate in f64, compare to a naive reference
        X32 = rng.standard_normal((20, 64)).astype(np.float32)
        w = rng.standard_normal(64)
        clf = LinearClassifier(weights=w)
        got = decision(clf, X32.astype(np.float64))
        for i in range(20):
            ref = math.fsum(float(X32[i, j]) * w[j] for j in range(64))
            assert got[i] == pytest.approx(ref, rel=1e-6)


class TestCosine:
    def test_scale_invariance(self, rng):
        X = rng.standard_normal((5, 4))
        q = rng.standard_normal(4)
        assert cosine_scores(X, q) == pytest.approx(cosine_scores(X, 10 * q), abs=1e-12)

    def test_self_similarity(self):
        X = np.array([[1.0, 0.0], [0.0, 2.0]])
        out = cosine_scores(X, np.array([1.0, 0.0]))
        assert out == pytest.approx([1.0, 0.0], abs=1e-12)

    def test_zero_query_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            cosine_scores(np.ones((2, 2)), np.zeros(2))
