"""Episode sampler: shapes, invariants, determinism, feasibility errors."""

import numpy as np
import pytest

from hyperclass.episodes import Episode, TaskConfig, derive_seed, sample_episode


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(42, 7) == derive_seed(42, 7)

    def test_spreads_indices(self):
        seeds = {derive_seed(0, i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_base_matters(self):
        assert derive_seed(1, 5) != derive_seed(2, 5)


class TestTaskConfig:
    def test_mode_validation(self):
        with pytest.raises(ValueError):
            TaskConfig(mode="closed-set")

    def test_shots_range(self):
        cfg = TaskConfig.irrf()
        assert cfg.shot_range == (1, 10)
        assert TaskConfig(shots=4).shot_range == (4, 4)
        with pytest.raises(ValueError):
            TaskConfig(shots=0)

    def test_fsor_needs_ways(self):
        with pytest.raises(ValueError):
            TaskConfig.fsor(ways=1)

    def test_open_set_needs_negative_classes(self):
        with pytest.raises(ValueError):
            TaskConfig.irrf(min_negative_classes=1)

    def test_ratio_range(self):
        cfg = TaskConfig.irrf(support_neg_per_pos=(0.5, 2.0))
        assert cfg.neg_ratio_range == (0.5, 2.0)


class TestIrrfSampling:
    def test_counts_and_spread(self, small_corpus):
        cfg = TaskConfig(mode="irrf", shots=4, support_neg_per_pos=4.0,
                         min_negative_classes=2, query_pos=3, query_neg=8)
        ep = sample_episode(small_corpus, "train", cfg, np.random.default_rng(0))
        assert ep.support_labels.sum() == 4
        assert (ep.support_labels == 0).sum() == 16
        neg_rows = ep.support_indices[ep.support_labels == 0]
        neg_classes = {int(small_corpus.class_labels[r]) for r in neg_rows.tolist()}
        assert len(neg_classes) >= 2
        assert ep.m == 11

    def test_support_query_disjoint(self, small_corpus):
        cfg = TaskConfig(mode="irrf", shots=2, support_neg_per_pos=2.0,
                         min_negative_classes=2, query_pos=4, query_neg=8)
        for seed in range(25):
            ep = sample_episode(small_corpus, "train", cfg, np.random.default_rng(seed))
            assert not set(ep.support_indices.tolist()) & set(ep.query_indices.tolist())

    def test_open_set_property(self, default_corpus):
        cfg = TaskConfig.irrf(query_neg=15)
        for seed in range(50):
            ep = sample_episode(default_corpus, "train", cfg, np.random.default_rng(seed))
            support_neg_rows = ep.support_indices[ep.support_labels == 0]
            support_classes = {int(default_corpus.class_labels[r]) for r in support_neg_rows.tolist()}
            query_neg_rows = ep.query_indices[ep.query_labels == 0]
            query_classes = {int(default_corpus.class_labels[r]) for r in query_neg_rows.tolist()}
            assert query_classes - support_classes, f"seed {seed} closed-set"

    def test_bitwise_determinism(self, small_corpus):
        cfg = TaskConfig(mode="irrf", shots=(1, 4), support_neg_per_pos=3.0,
                         min_negative_classes=2, query_pos=3, query_neg=6)
        a = sample_episode(small_corpus, "train", cfg, np.random.default_rng(5))
        b = sample_episode(small_corpus, "train", cfg, np.random.default_rng(5))
        assert a.support_features.tobytes() == b.support_features.tobytes()
        assert a.query_features.tobytes() == b.query_features.tobytes()
        assert np.array_equal(a.support_indices, b.support_indices)
        assert a.positive_class == b.positive_class

    def test_positive_class_not_negative(self, small_corpus):
        cfg = TaskConfig(mode="irrf", shots=2, support_neg_per_pos=2.0,
                         min_negative_classes=2, query_pos=2, query_neg=6)
        for seed in range(10):
            ep = sample_episode(small_corpus, "train", cfg, np.random.default_rng(seed))
            assert ep.positive_class not in ep.negative_classes

    def test_infeasible_support_ratio(self, small_corpus):
        cfg = TaskConfig(mode="irrf", shots=1, support_neg_per_pos=1.0,
                         min_negative_classes=2, query_pos=2, query_neg=4)
        with pytest.raises(ValueError, match="span"):
            sample_episode(small_corpus, "train", cfg, np.random.default_rng(0))

    def test_infeasible_class_size(self, small_corpus):
        cfg = TaskConfig(mode="irrf", shots=10, support_neg_per_pos=1.0,
                         min_negative_classes=2, query_pos=10, query_neg=4)
        with pytest.raises(ValueError, match="needs"):
            sample_episode(small_corpus, "train", cfg, np.random.default_rng(0))


class TestFsoccSampling:
    def test_positives_only_support(self, default_corpus):
        cfg = TaskConfig.fsocc(shots=5)
        ep = sample_episode(default_corpus, "test", cfg, np.random.default_rng(0))
        assert ep.n == 5
        assert np.all(ep.support_labels == 1)
        assert (ep.query_labels == 1).sum() == 15
        assert (ep.query_labels == 0).sum() == 15

    def test_shot_range_sampling(self, default_corpus):
        cfg = TaskConfig.fsocc(shots=(1, 5))
        sizes = {sample_episode(default_corpus, "train", cfg, np.random.default_rng(s)).n
                 for s in range(30)}
        assert sizes == {1, 2, 3, 4, 5}


class TestFsorSampling:
    def test_query_composition(self, default_corpus):
        cfg = TaskConfig.fsor(ways=5, shots=1)
        ep = sample_episode(default_corpus, "test", cfg, np.random.default_rng(0))
        assert ep.n == 5
        assert ep.m == 150
        support_classes = set(ep.support_labels.tolist())
        assert len(support_classes) == 5
        in_set = np.isin(ep.query_labels, list(support_classes))
        assert in_set.sum() == 75
        assert (~in_set).sum() == 75

    def test_unknown_classes_disjoint(self, default_corpus):
        cfg = TaskConfig.fsor(ways=5, shots=5)
        for seed in range(10):
            ep = sample_episode(default_corpus, "test", cfg, np.random.default_rng(seed))
            assert not set(ep.support_labels.tolist()) & ep.negative_classes

    def test_needs_enough_classes(self, small_corpus):
        cfg = TaskConfig.fsor(ways=5, shots=1)
        with pytest.raises(ValueError, match="classes"):
            sample_episode(small_corpus, "val", cfg, np.random.default_rng(0))


class TestEpisodeInvariants:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="share"):
            Episode(support_features=np.zeros((1, 2)), support_labels=np.array([1]),
                    query_features=np.zeros((1, 2)), query_labels=np.array([1]),
                    positive_class=0, negative_classes=frozenset({1}),
                    support_indices=np.array([3]), query_indices=np.array([3]))

    def test_positive_in_negatives_rejected(self):
        with pytest.raises(ValueError, match="positive_class"):
            Episode(support_features=np.zeros((1, 2)), support_labels=np.array([1]),
                    query_features=np.zeros((1, 2)), query_labels=np.array([1]),
                    positive_class=1, negative_classes=frozenset({1}),
                    support_indices=np.array([0]), query_indices=np.array([1]))
