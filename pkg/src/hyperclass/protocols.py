"""Benchmark harnesses: the simulated relevance-feedback loop, one-class and
open-set episode evaluation, plus the feedback simulator they share with the
interactive service.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .baselines import RocchioWeights
from .concurrency import ordered_map
from .corpus import FeatureCorpus
from .episodes import TaskConfig, derive_seed, sample_episode
from .estimators import build_method
from .linear import cosine_scores, decision
from .metrics import (EpisodeReport, auroc, average_precision, f1_and_acc,
                      mean_std_ci, precision_at_k, ranking_order, sweep_threshold)


@dataclass(frozen=True)
class IrrfConfig:
    """Settings for the simulated feedback loop."""

    iterations: int = 3
    budget: int = 10
    pos_ratio: float = 0.8
    pool_k: int = 100
    seeds: int = 5
    queries_per_class: int = 5
    method: str = "hc"
    residual_eval: bool = False
    adapt: model.AdaptConfig = field(default_factory=model.AdaptConfig)
    lr_steps: int = 100
    lr_lr: float = 0.5
    lr_l2: float = 1e-4
    rocchio: RocchioWeights = field(default_factory=RocchioWeights)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.pool_k < self.budget:
            raise ValueError("pool_k must be >= budget")
        if not 0.0 <= self.pos_ratio <= 1.0:
            raise ValueError("pos_ratio must lie in [0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def simulate_feedback(candidate_ids: np.ndarray, candidate_is_positive: np.ndarray,
                      budget: int, pos_ratio: float,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Emulate a user tagging ``budget`` items from the ranked candidate pool.

    Requests round(budget * pos_ratio) positives and the remainder negatives,
    uniformly without replacement within each group; a shortage in one group
    is filled from the other, so the total is min(budget, len(candidates)).
    Returns (chosen ids, binary labels), positives first.
    """
    candidate_ids = np.asarray(candidate_ids)
    is_pos = np.asarray(candidate_is_positive).astype(bool)
    if candidate_ids.shape != is_pos.shape:
        raise ValueError("candidate ids and labels must align")
    pos_pool = candidate_ids[is_pos]
    neg_pool = candidate_ids[~is_pos]
    want_pos = round(budget * pos_ratio)
    want_neg = budget - want_pos
    take_pos = min(want_pos, pos_pool.size)
    take_neg = min(want_neg, neg_pool.size)
    shortfall = budget - take_pos - take_neg
    if shortfall > 0:
        extra_neg = min(shortfall, neg_pool.size - take_neg)
        take_neg += extra_neg
        take_pos += min(shortfall - extra_neg, pos_pool.size - take_pos)
    chosen_pos = rng.choice(pos_pool, size=take_pos, replace=False) if take_pos else pos_pool[:0]
    chosen_neg = rng.choice(neg_pool, size=take_neg, replace=False) if take_neg else neg_pool[:0]
    ids = np.concatenate([chosen_pos, chosen_neg])
    labels = np.concatenate([np.ones(take_pos, dtype=np.int64), np.zeros(take_neg, dtype=np.int64)])
    return ids, labels


def refit_scores(method: str, X: np.ndarray, pool_rows: list[int], pool_labels: list[int],
                 *, init_params=None, query_vector=None, cfg: IrrfConfig) -> np.ndarray:
    """Fit the configured method on the labeled pool and score every corpus row.

    This is the single re-ranking code path shared by the simulated loop and
    the interactive service, so identical label sequences produce identical
    rankings in both.
    """
    est = build_method(
        method or cfg.method,
        params=init_params, query=query_vector, adapt_cfg=cfg.adapt,
        lr_steps=cfg.lr_steps, lr_lr=cfg.lr_lr, lr_l2=cfg.lr_l2,
        rocchio_weights=cfg.rocchio)
    est.fit(X[np.asarray(pool_rows, dtype=np.int64)], np.asarray(pool_labels, dtype=np.int64))
    return np.asarray(est.decision_function(X), dtype=np.float64)


@dataclass
class IrrfRunResult:
    """Per-iteration trace of one (class, query, seed) retrieval session."""

    class_id: int
    query_index: int
    seed: int
    shots: list[int]
    map_values: list[float]
    p50_values: list[float]
    feedback: list[list[tuple[int, int]]]  # per iteration: (corpus row, label)
    rankings: list[np.ndarray] | None = None


def query_rows_for_class(corpus: FeatureCorpus, split: str, class_id: int,
                         queries_per_class: int) -> np.ndarray:
    """The fixed initial-query rows: first rows of the class within the split."""
    rows = corpus.split_class_rows(split).get(class_id)
    if rows is None:
        raise ValueError(f"class {class_id} is not present in split {split!r}")
    if rows.size < queries_per_class:
        raise ValueError(
            f"class {class_id} has {rows.size} rows in {split!r}, needs {queries_per_class}")
    return rows[:queries_per_class]


def run_irrf(corpus: FeatureCorpus, init_params, cfg: IrrfConfig, class_id: int,
             query_index: int, seed: int, split: str = "test",
             keep_rankings: bool = False) -> IrrfRunResult:
    """One simulated retrieval session with relevance feedback.

    Iteration 0 ranks the split by cosine similarity to the single query
    feature; each later iteration draws feedback from the top ``pool_k``
    unlabeled candidates, refits the method on the accumulated pool (the
    query itself counts as a labeled positive) and re-ranks the whole split.
    """
    rng = np.random.default_rng(seed)
    split_rows = corpus.split_rows(split)
    X = corpus.data[split_rows].astype(np.float64)
    truth = (corpus.class_labels[split_rows] == class_id)
    query_global = int(query_rows_for_class(corpus, split, class_id, query_index + 1)[query_index])
    query_local = int(np.flatnonzero(split_rows == query_global)[0])
    query_vec = X[query_local]

    pool: dict[int, int] = {query_local: 1}
    scores = cosine_scores(X, query_vec)
    order = ranking_order(scores)

    def record(scores_now: np.ndarray) -> tuple[float, float]:
        if cfg.residual_eval:
            keep = np.setdiff1d(np.arange(X.shape[0]), np.asarray(list(pool)), assume_unique=False)
            return (average_precision(scores_now[keep], truth[keep]),
                    precision_at_k(scores_now[keep], truth[keep], 50))
        return average_precision(scores_now, truth), precision_at_k(scores_now, truth, 50)

    m, p = record(scores)
    result = IrrfRunResult(class_id=class_id, query_index=query_index, seed=seed,
                           shots=[1], map_values=[m], p50_values=[p], feedback=[],
                           rankings=[order.copy()] if keep_rankings else None)

    for it in range(1, cfg.iterations + 1):
        unlabeled = order[~np.isin(order, np.asarray(list(pool)))]
        candidates = unlabeled[:cfg.pool_k]
        chosen, labels = simulate_feedback(candidates, truth[candidates],
                                           cfg.budget, cfg.pos_ratio, rng)
        picked = []
        for row, lab in zip(chosen.tolist(), labels.tolist()):
            pool[int(row)] = int(lab)
            picked.append((int(row), int(lab)))
        result.feedback.append(picked)

        scores = refit_scores(cfg.method, X, list(pool), list(pool.values()),
                              init_params=init_params, query_vector=query_vec, cfg=cfg)
        order = ranking_order(scores)
        m, p = record(scores)
        result.shots.append(1 + cfg.budget * it)
        result.map_values.append(m)
        result.p50_values.append(p)
        if keep_rankings:
            result.rankings.append(order.copy())
    return result


@dataclass
class LearningCurve:
    """Seed-aggregated retrieval learning curve.

    Per-iteration means/stds are taken over seed-level averages (each seed is
    first averaged across classes and queries, matching the ribbon plots)."""

    shots: list[int]
    map_mean: list[float]
    map_std: list[float]
    p50_mean: list[float]
    p50_std: list[float]
    per_seed_map: list[list[float]]
    per_seed_p50: list[list[float]]

    def to_dict(self) -> dict:
        return {
            "shots": self.shots,
            "map_mean": self.map_mean, "map_std": self.map_std,
            "p50_mean": self.p50_mean, "p50_std": self.p50_std,
            "per_seed_map": self.per_seed_map, "per_seed_p50": self.per_seed_p50,
        }


def evaluate_irrf(corpus: FeatureCorpus, init_params, cfg: IrrfConfig,
                  classes: list[int] | None = None, split: str = "test",
                  base_seed: int = 0, workers: int | None = 1) -> LearningCurve:
    """Average ``run_irrf`` over classes x queries x seeds.

    Seed s uses derive_seed(base_seed, s) for its feedback sampling, the same
    value across every (class, query) cell, replicating the shared-seed
    protocol of the reference loop. Cells are independent; ``workers`` may
    evaluate them concurrently without changing the aggregation order.
    """
    if classes is None:
        classes = sorted(corpus.split_class_rows(split))
    n_iters = cfg.iterations + 1
    per_seed_map: list[list[float]] = []
    per_seed_p50: list[list[float]] = []
    cells = [(class_id, q) for class_id in classes for q in range(cfg.queries_per_class)]
    for s in range(cfg.seeds):
        seed_val = derive_seed(base_seed, s)
        runs = ordered_map(
            lambda cell: run_irrf(corpus, init_params, cfg, cell[0], cell[1],
                                  seed_val, split=split),
            cells, workers)
        maps = np.sum([r.map_values for r in runs], axis=0)
        p50s = np.sum([r.p50_values for r in runs], axis=0)
        per_seed_map.append((maps / len(cells)).tolist())
        per_seed_p50.append((p50s / len(cells)).tolist())
    map_arr = np.asarray(per_seed_map)
    p50_arr = np.asarray(per_seed_p50)
    ddof = 1 if cfg.seeds > 1 else 0
    return LearningCurve(
        shots=[1 + cfg.budget * i for i in range(n_iters)],
        map_mean=map_arr.mean(axis=0).tolist(),
        map_std=map_arr.std(axis=0, ddof=ddof).tolist(),
        p50_mean=p50_arr.mean(axis=0).tolist(),
        p50_std=p50_arr.std(axis=0, ddof=ddof).tolist(),
        per_seed_map=per_seed_map,
        per_seed_p50=per_seed_p50,
    )


# -- one-class and open-set protocols ----------------------------------------


def _fsocc_episode_scores(corpus: FeatureCorpus, params, shots: int, episodes: int,
                          method: str, transductive: bool, adapt_cfg: model.AdaptConfig,
                          base_seed: int, split: str,
                          workers: int | None = 1) -> list[tuple[np.ndarray, np.ndarray]]:
    task = TaskConfig.fsocc(shots=shots)

    def one(i: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(derive_seed(base_seed, i))
        ep = sample_episode(corpus, split, task, rng)
        if method == "proto":
            est = build_method("proto")
            est.fit(ep.support_features, ep.support_labels)
        else:
            cfg = replace(adapt_cfg, transductive=transductive)
            est = build_method("hc", params=params, adapt_cfg=cfg)
            if transductive:
                est.fit(ep.support_features, ep.support_labels, unlabeled=ep.query_features)
            else:
                est.fit(ep.support_features, ep.support_labels)
        return est.predict_proba(ep.query_features)[:, 1], ep.query_labels

    return ordered_map(one, range(episodes), workers)


def calibrate_fsocc_thresholds(corpus: FeatureCorpus, params, shots: int,
                               method: str = "hc", transductive: bool = False,
                               adapt_cfg: model.AdaptConfig | None = None,
                               episodes: int = 500, base_seed: int = 1,
                               split: str = "val", workers: int | None = 1) -> dict[str, float]:
    """Per-metric thresholds maximizing mean Acc / F1 over validation episodes."""
    adapt_cfg = adapt_cfg or model.AdaptConfig()
    pairs = _fsocc_episode_scores(corpus, params, shots, episodes, method,
                                  transductive, adapt_cfg, base_seed, split, workers)
    acc_t, _ = sweep_threshold(pairs, "acc")
    f1_t, _ = sweep_threshold(pairs, "f1")
    return {"acc": acc_t, "f1": f1_t}


def run_fsocc(corpus: FeatureCorpus, params, shots: int, episodes: int = 10000,
              transductive: bool = False, method: str = "hc",
              adapt_cfg: model.AdaptConfig | None = None,
              thresholds: dict[str, float] | None = None,
              base_seed: int = 0, split: str = "test",
              workers: int | None = 1) -> dict[str, EpisodeReport]:
    """One-class episodes: adapt on K positives (optionally transductively),
    score the 15+15 query set, report Acc/F1/AUROC with 95% CI."""
    adapt_cfg = adapt_cfg or model.AdaptConfig()
    thresholds = thresholds or {"acc": 0.5, "f1": 0.5}
    pairs = _fsocc_episode_scores(corpus, params, shots, episodes, method,
                                  transductive, adapt_cfg, base_seed, split, workers)
    aurocs, f1s, accs = [], [], []
    for scores, labels in pairs:
        aurocs.append(auroc(scores, labels))
        f1s.append(f1_and_acc(scores, labels, thresholds["f1"])[0])
        accs.append(f1_and_acc(scores, labels, thresholds["acc"])[1])
    return {
        "auroc": EpisodeReport.from_values("auroc", aurocs),
        "f1": EpisodeReport.from_values("f1", f1s, threshold=thresholds["f1"]),
        "acc": EpisodeReport.from_values("acc", accs, threshold=thresholds["acc"]),
    }


def run_fsor(corpus: FeatureCorpus, params, ways: int = 5, shots: int = 5,
             episodes: int = 600, adapt_cfg: model.AdaptConfig | None = None,
             method: str = "hc", base_seed: int = 0, split: str = "test",
             workers: int | None = 1) -> EpisodeReport:
    """Open-set negative detection: one head per support class, max-score
    fusion, AUROC of in-set vs out-of-set over the query set."""
    adapt_cfg = adapt_cfg or model.AdaptConfig()
    if method == "hc":
        params = model.resolve_params(params, dim=corpus.dim)
    task = TaskConfig.fsor(ways=ways, shots=shots)

    def one(i: int) -> float:
        rng = np.random.default_rng(derive_seed(base_seed, i))
        ep = sample_episode(corpus, split, task, rng)
        support_classes = sorted(set(ep.support_labels.tolist()))
        in_set = np.isin(ep.query_labels, np.asarray(support_classes))
        if method == "proto":
            per_head = []
            for c in support_classes:
                est = build_method("proto")
                est.fit(ep.support_features[ep.support_labels == c])
                per_head.append(est.predict_proba(ep.query_features)[:, 1])
            scores = np.max(np.stack(per_head), axis=0)
        else:
            heads_P, heads_b = [], []
            for c in support_classes:
                Xc = ep.support_features[ep.support_labels == c]
                adapted = model.adapt(params, Xc, np.ones(Xc.shape[0], dtype=np.int64), adapt_cfg)
                heads_P.append(adapted.P)
                heads_b.append(adapted.b)
            heads = model.FsorHeads(shared_v=params.v, per_class_P=heads_P, per_class_b=heads_b)
            scores = model.fsor_in_set_score(heads, ep.query_features)
        return auroc(scores, in_set)

    values = ordered_map(one, range(episodes), workers)
    return EpisodeReport.from_values("auroc", values)
