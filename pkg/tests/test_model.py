"""Core model: composition, analytic gradients (vs an independent
finite-difference oracle), adaptation contracts, transductive loss, multi-head
fusion and checkpoint persistence."""

import math

import numpy as np
import pytest

from hyperclass import model
from hyperclass.linear import score, sigmoid
from hyperclass.model import (AdaptConfig, Checkpoint, FsorHeads, HyperClassParams,
                              adapt, adapt_transductive, bce_objective, compose,
                              fsor_in_set_score, grads, init_params, load_checkpoint,
                              resolve_params, save_checkpoint, transductive_grads,
                              transductive_objective)


def fd_oracle(objective, params, h=1e-6):
    """Independent central-difference gradients over (v, P, b)."""
    out = {}
    for name in ("v", "P", "b"):
        arr = getattr(params, name)
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            hi = objective(params)
            arr[idx] = orig - h
            lo = objective(params)
            arr[idx] = orig
            g[idx] = (hi - lo) / (2 * h)
            it.iternext()
        out[name] = g
    return out


def e(i, d):
    v = np.zeros(d)
    v[i] = 1.0
    return v


class TestCompose:
    def test_identity_projection(self):
        p = HyperClassParams(e(0, 3), np.eye(3), np.zeros(3))
        assert compose(p).weights.tolist() == [1.0, 0.0, 0.0]

    def test_zero_v_gives_bias(self):
        beta = np.array([1.0, -2.0, 3.0])
        p = HyperClassParams(np.zeros(3), np.arange(9.0).reshape(3, 3), beta)
        assert np.array_equal(compose(p).weights, beta)

    def test_zero_projection_scores_half(self, rng):
        p = HyperClassParams(rng.standard_normal(4), np.zeros((4, 4)), np.zeros(4))
        assert score(compose(p), rng.standard_normal(4)) == 0.5

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            HyperClassParams(np.zeros(3), np.zeros((2, 3)), np.zeros(3))
        with pytest.raises(ValueError):
            HyperClassParams(np.zeros(3), np.full((3, 3), np.nan), np.zeros(3))


class TestGrads:
    def test_single_positive_at_zero_logit(self):
        # W = e0, x = e1 so W.x = 0: lambda = alpha = 0.5
        P = np.eye(2)
        p = HyperClassParams(e(0, 2), P, np.zeros(2))
        x = e(1, 2)
        g = grads(p, x.reshape(1, -1), [1])
        assert g.per_sample_alpha == pytest.approx([0.5])
        assert g.per_sample_lambda == pytest.approx([0.5])
        assert g.dv == pytest.approx(-0.5 * P.T @ x)
        assert g.dP == pytest.approx(-0.5 * np.outer(x, p.v))
        assert g.db == pytest.approx(-0.5 * x)

    def test_single_negative_flips_sign(self):
        P = np.eye(2)
        p = HyperClassParams(e(0, 2), P, np.zeros(2))
        x = e(1, 2)
        gp = grads(p, x.reshape(1, -1), [1])
        gn = grads(p, x.reshape(1, -1), [0])
        assert gn.per_sample_lambda == pytest.approx([-0.5])
        assert gn.dv == pytest.approx(-gp.dv)
        assert gn.dP == pytest.approx(-gp.dP)
        assert gn.db == pytest.approx(-gp.db)

    def test_zero_v_zeroes_projection_gradient(self, rng):
        p = HyperClassParams(np.zeros(5), rng.standard_normal((5, 5)), rng.standard_normal(5))
        g = grads(p, rng.standard_normal((4, 5)), [1, 0, 1, 0])
        assert np.all(g.dP == 0.0)
        assert np.linalg.norm(g.dv) > 0
        assert np.linalg.norm(g.db) > 0

    def test_lambda_range(self, rng):
        p = init_params(6, rng)
        g = grads(p, rng.standard_normal((10, 6)), rng.integers(0, 2, 10))
        assert np.all(g.per_sample_lambda > -1.0)
        assert np.all(g.per_sample_lambda < 1.0)

    @pytest.mark.parametrize("l2", [0.0, 1e-3])
    def test_matches_finite_differences(self, rng, l2):
        d = 5
        p = HyperClassParams(rng.standard_normal(d) / np.sqrt(d),
                             np.eye(d) + 0.1 * rng.standard_normal((d, d)),
                             0.1 * rng.standard_normal(d))
        X = rng.standard_normal((6, d))
        y = rng.integers(0, 2, 6)
        g = grads(p, X, y, l2)
        fd = fd_oracle(lambda q: bce_objective(q, X, y, l2), p)
        for got, ref in ((g.dv, fd["v"]), (g.dP, fd["P"]), (g.db, fd["b"])):
            assert np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-12) < 1e-6

    def test_empty_batch_rejected(self, rng):
        p = init_params(3, rng)
        with pytest.raises(ValueError):
            grads(p, np.zeros((0, 3)), [])


class TestAdapt:
    def test_zero_steps_identity(self, rng):
        p = init_params(4, rng)
        out = adapt(p, rng.standard_normal((3, 4)), [1, 0, 1], AdaptConfig(steps=0))
        assert out.v is p.v and out.P is p.P and out.b is p.b

    def test_single_step_closed_form(self):
        # v=0, P=I, b=0, one positive e0, lr=1: composed W moves 0 -> e0 exactly
        p = HyperClassParams(np.zeros(2), np.eye(2), np.zeros(2))
        cfg = AdaptConfig(steps=1, inner_lr=1.0, l2_weight=0.0, adapt_set=("v", "P", "b"))
        out = adapt(p, e(0, 2).reshape(1, -1), [1], cfg)
        assert compose(out).weights == pytest.approx(e(0, 2), abs=1e-15)

    def test_adapt_set_invariance(self, rng):
        p = init_params(6, rng)
        X = rng.standard_normal((5, 6))
        y = rng.integers(0, 2, 5)
        out = adapt(p, X, y, AdaptConfig(steps=3, adapt_set=("P", "b")))
        assert np.array_equal(out.v, p.v)
        assert not np.array_equal(out.P, p.P)
        assert not np.array_equal(out.b, p.b)

    def test_requires_adapt_set_when_stepping(self):
        with pytest.raises(ValueError):
            AdaptConfig(steps=1, adapt_set=())

    def test_non_finite_aborts(self):
        p = HyperClassParams(np.ones(2), np.eye(2), np.zeros(2))
        cfg = AdaptConfig(steps=3, inner_lr=1e308, adapt_set=("v", "P", "b"))
        with pytest.raises(FloatingPointError):
            adapt(p, np.ones((1, 2)), [1], cfg)

    def test_mode_collapse_guard(self, rng):
        # one-class supports, <=5 steps, l2=1e-4: composed norm stays bounded
        for trial in range(20):
            p = init_params(8, np.random.default_rng(trial))
            X = rng.standard_normal((5, 8))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            cfg = AdaptConfig(steps=5, inner_lr=0.5, l2_weight=1e-4, adapt_set=("v", "P", "b"))
            out = adapt(p, X, np.ones(5, dtype=int), cfg)
            w0 = np.linalg.norm(compose(p).weights)
            w1 = np.linalg.norm(compose(out).weights)
            assert w1 <= 10 * w0 + 10

    def test_first_step_identity_random(self, rng):
        # single sample, lr=1, full adapt set: delta W = lambda P0 P0^T x + C x
        for _ in range(50):
            d = 6
            v0 = rng.standard_normal(d) / np.sqrt(d)
            P0 = np.eye(d) + 0.1 * rng.standard_normal((d, d))
            b0 = 0.1 * rng.standard_normal(d)
            p = HyperClassParams(v0, P0, b0)
            x = rng.standard_normal(d)
            x /= np.linalg.norm(x)
            label = int(rng.integers(0, 2))
            cfg = AdaptConfig(steps=1, inner_lr=1.0, l2_weight=0.0, adapt_set=("v", "P", "b"))
            out = adapt(p, x.reshape(1, -1), [label], cfg)
            delta = compose(out).weights - compose(p).weights
            alpha = 1.0 - sigmoid(float(compose(p).weights @ x))
            lam = alpha if label == 1 else alpha - 1.0
            C = lam * (v0 @ v0 + 1.0) + lam ** 2 * (v0 @ P0.T @ x)
            formula = lam * (P0 @ P0.T @ x) + C * x
            assert np.linalg.norm(delta - formula) <= 1e-10


class TestTransductive:
    def test_unlabeled_term_value_at_half(self):
        # zero classifier scores everything 0.5: unlabeled term = ln(2)/4
        p = HyperClassParams(np.zeros(3), np.eye(3), np.zeros(3))
        Xs = np.eye(3)[:2]
        Xq = np.eye(3)
        supervised_only = transductive_objective(p, Xs, Xq, entropy_weight=0.0)
        balanced = transductive_objective(p, Xs, Xq, entropy_weight=0.5)
        assert supervised_only == pytest.approx(math.log(2), abs=1e-12)
        assert balanced - 0.5 * supervised_only == pytest.approx(math.log(2) / 4, abs=1e-12)

    def test_confident_scores_vanishing_entropy_term(self):
        p = HyperClassParams(np.zeros(2), np.eye(2), np.array([50.0, 50.0]))
        Xq = np.abs(np.random.default_rng(0).standard_normal((5, 2))) + 0.5
        val = transductive_objective(p, Xq[:1], Xq, entropy_weight=1.0)
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_zero_steps_identity(self, rng):
        p = init_params(4, rng)
        out = adapt_transductive(p, rng.standard_normal((2, 4)), rng.standard_normal((5, 4)),
                                 AdaptConfig(steps=0))
        assert out.v is p.v and out.P is p.P and out.b is p.b

    @pytest.mark.parametrize("full_entropy", [False, True])
    def test_matches_finite_differences(self, rng, full_entropy):
        d = 4
        p = HyperClassParams(rng.standard_normal(d) / 2, np.eye(d) + 0.1 * rng.standard_normal((d, d)),
                             0.1 * rng.standard_normal(d))
        Xs = rng.standard_normal((3, d))
        Xq = rng.standard_normal((5, d))
        g = transductive_grads(p, Xs, Xq, l2_weight=1e-3, entropy_weight=0.4,
                               full_entropy=full_entropy)
        fd = fd_oracle(lambda q: transductive_objective(
            q, Xs, Xq, l2_weight=1e-3, entropy_weight=0.4, full_entropy=full_entropy), p)
        for got, ref in ((g.dv, fd["v"]), (g.dP, fd["P"]), (g.db, fd["b"])):
            assert np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-12) < 1e-6

    def test_empty_sets_rejected(self, rng):
        p = init_params(3, rng)
        with pytest.raises(ValueError):
            adapt_transductive(p, np.zeros((0, 3)), np.ones((2, 3)), AdaptConfig())
        with pytest.raises(ValueError):
            adapt_transductive(p, np.ones((2, 3)), np.zeros((0, 3)), AdaptConfig())


class TestFsorHeads:
    def test_single_head_equals_score(self, rng):
        p = init_params(5, rng)
        heads = FsorHeads(shared_v=p.v, per_class_P=[p.P], per_class_b=[p.b])
        X = rng.standard_normal((7, 5))
        assert fsor_in_set_score(heads, X) == pytest.approx(score(compose(p), X))

    def test_max_over_heads(self, rng):
        d = 4
        v = rng.standard_normal(d)
        heads = FsorHeads(shared_v=v,
                          per_class_P=[rng.standard_normal((d, d)) for _ in range(3)],
                          per_class_b=[rng.standard_normal(d) for _ in range(3)])
        X = rng.standard_normal((6, d))
        per_head = np.stack([
            score(compose(HyperClassParams(v, P, b)), X)
            for P, b in zip(heads.per_class_P, heads.per_class_b)])
        assert fsor_in_set_score(heads, X) == pytest.approx(per_head.max(axis=0))

    def test_adding_head_never_decreases(self, rng):
        d = 4
        v = rng.standard_normal(d)
        base = [np.eye(d)], [np.zeros(d)]
        small = FsorHeads(v, list(base[0]), list(base[1]))
        grown = FsorHeads(v, base[0] + [rng.standard_normal((d, d))],
                          base[1] + [rng.standard_normal(d)])
        X = rng.standard_normal((10, d))
        assert np.all(fsor_in_set_score(grown, X) >= fsor_in_set_score(small, X))

    def test_empty_heads_rejected(self):
        with pytest.raises(ValueError):
            FsorHeads(np.zeros(3), [], [])


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        params = init_params(6, rng)
        ck = Checkpoint(params=params, config={"ablation": "both", "seed": 3},
                        best_validation_score=0.75, meta_batch_index=42)
        path = tmp_path / "model.ckpt"
        save_checkpoint(ck, path)
        first = path.read_bytes()
        again = load_checkpoint(path)
        save_checkpoint(again, path)
        assert path.read_bytes() == first
        assert again.config == ck.config
        assert again.best_validation_score == 0.75
        assert again.meta_batch_index == 42
        # loaded parameters equal the float32-truncated originals
        assert np.array_equal(again.params.v, params.v.astype(np.float32).astype(np.float64))

    def test_truncated_blob_rejected(self, tmp_path, rng):
        path = tmp_path / "model.ckpt"
        save_checkpoint(Checkpoint(init_params(4, rng), {}, 0.0, 0), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(ValueError, match="bytes"):
            load_checkpoint(path)

    def test_resolve_params(self, tmp_path, rng):
        params = init_params(4, rng)
        assert resolve_params(params) is params
        ck = Checkpoint(params, {}, 0.0, 0)
        assert resolve_params(ck) is params
        path = tmp_path / "m.ckpt"
        save_checkpoint(ck, path)
        assert resolve_params(str(path)).dim == 4
        assert resolve_params(None, dim=5, seed=1).dim == 5
        with pytest.raises(ValueError):
            resolve_params(None)
        with pytest.raises(TypeError):
            resolve_params(3.14)


def test_init_params_shapes_and_determinism():
    a = init_params(8, 5)
    b = init_params(8, 5)
    assert np.array_equal(a.v, b.v) and np.array_equal(a.P, b.P)
    assert np.all(a.b == 0.0)
    assert a.P.shape == (8, 8)
    # identity-dominant projection at init
    assert np.abs(np.diag(a.P) - 1.0).max() < 0.1
