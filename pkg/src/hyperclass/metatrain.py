"""First-order episodic meta-training of the shared (v, P, b) initialization.

Each meta-batch samples T episodes; every episode adapts a private copy of
the initialization on its support set, the query-set BCE gradient is taken at
the adapted parameters and applied (averaged over the batch, in task order)
to the shared initialization through Adam with decoupled weight decay. The
best checkpoint is selected on a fixed set of validation episodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .corpus import FeatureCorpus
from .episodes import Episode, TaskConfig, derive_seed, sample_episode
from .linear import decision
from .metrics import auroc, average_precision

ABLATIONS = ("none", "v_only", "p_only", "both")

# Which parameters the outer loop may update under each ablation; frozen
# parameters keep their init values bitwise (no update and no weight decay).
_ABLATION_ACTIVE = {
    "both": ("v", "P", "b"),
    "v_only": ("v",),
    "p_only": ("P", "b"),
    "none": (),
}


@dataclass(frozen=True)
class MetaTrainConfig:
    task: TaskConfig = field(default_factory=TaskConfig.irrf)
    meta_batches: int = 300
    tasks_per_batch: int = 100
    inner: model.AdaptConfig = field(default_factory=lambda: model.AdaptConfig(
        steps=5, inner_lr=0.5, l2_weight=1e-4, adapt_set=("v", "P", "b")))
    outer_lr: float = 0.001
    outer_weight_decay: float = 0.001
    ablation: str = "both"
    selection_metric: str = "AP"
    eval_every: int = 10
    val_episodes: int = 200
    seed: int = 0
    # adaptation used when scoring validation episodes (meta-test protocol)
    test_adapt: model.AdaptConfig = field(default_factory=model.AdaptConfig)

    def __post_init__(self):
        if self.tasks_per_batch < 1:
            raise ValueError("tasks_per_batch must be >= 1")
        if self.meta_batches < 0:
            raise ValueError("meta_batches must be >= 0")
        if self.outer_lr < 0 or self.outer_weight_decay < 0:
            raise ValueError("learning rates must be non-negative")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if self.selection_metric not in ("AP", "AUROC"):
            raise ValueError("selection_metric must be 'AP' or 'AUROC'")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    def to_dict(self) -> dict:
        return {
            "task": {
                "mode": self.task.mode,
                "shots": list(self.task.shots) if isinstance(self.task.shots, tuple) else self.task.shots,
                "ways": self.task.ways,
                "support_neg_per_pos": self.task.support_neg_per_pos,
                "min_negative_classes": self.task.min_negative_classes,
                "query_pos": self.task.query_pos,
                "query_neg": self.task.query_neg,
                "unknown_classes": self.task.unknown_classes,
            },
            "meta_batches": self.meta_batches,
            "tasks_per_batch": self.tasks_per_batch,
            "inner": {
                "steps": self.inner.steps,
                "inner_lr": self.inner.inner_lr,
                "l2_weight": self.inner.l2_weight,
                "adapt_set": list(self.inner.adapt_set),
            },
            "outer_lr": self.outer_lr,
            "outer_weight_decay": self.outer_weight_decay,
            "ablation": self.ablation,
            "selection_metric": self.selection_metric,
            "eval_every": self.eval_every,
            "val_episodes": self.val_episodes,
            "seed": self.seed,
        }


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def like(cls, params: model.HyperClassParams) -> "AdamState":
        zeros = {n: np.zeros_like(getattr(params, n)) for n in model.PARAM_NAMES}
        return cls(m=zeros, v={n: a.copy() for n, a in zeros.items()}, t=0)


def adam_step(state: AdamState, params: model.HyperClassParams,
              grads: dict[str, np.ndarray], lr: float, weight_decay: float,
              active: tuple[str, ...] = ("v", "P", "b"),
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> model.HyperClassParams:
    """One Adam update with decoupled weight decay (theta -= lr*wd*theta first).

    Only parameters in ``active`` move; the shared step counter advances once
    per call. Returns new parameters; ``state`` is updated in place.
    """
    state.t += 1
    new = {}
    for name in model.PARAM_NAMES:
        theta = getattr(params, name)
        if name not in active:
            new[name] = theta
            continue
        g = grads[name]
        theta = theta - lr * weight_decay * theta
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1 ** state.t)
        v_hat = state.v[name] / (1.0 - beta2 ** state.t)
        new[name] = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return model.HyperClassParams(new["v"], new["P"], new["b"])


def _episode_score(params: model.HyperClassParams, episode: Episode,
                   adapt_cfg: model.AdaptConfig, metric: str) -> float:
    adapted = model.adapt(params, episode.support_features, episode.support_labels, adapt_cfg)
    scores = decision(model.compose(adapted), episode.query_features)
    if metric == "AP":
        return average_precision(scores, episode.query_labels)
    return auroc(scores, episode.query_labels)


def validation_score(params: model.HyperClassParams, episodes: list[Episode],
                     adapt_cfg: model.AdaptConfig, metric: str) -> float:
    return float(np.mean([_episode_score(params, ep, adapt_cfg, metric) for ep in episodes]))


def sample_validation_episodes(corpus: FeatureCorpus, cfg: MetaTrainConfig,
                               split: str = "val") -> list[Episode]:
    """The fixed validation set: episode i uses seed derive(seed, 2^32 + i)."""
    episodes = []
    for i in range(cfg.val_episodes):
        rng = np.random.default_rng(derive_seed(cfg.seed, (1 << 32) + i))
        episodes.append(sample_episode(corpus, split, cfg.task, rng))
    return episodes


def meta_train(corpus: FeatureCorpus, cfg: MetaTrainConfig,
               progress=None) -> model.Checkpoint:
    """Train the shared initialization; returns the best validation checkpoint.

    ``progress``, when given, is called as progress(batch_index, mean_query_loss,
    val_score_or_None) after every meta-batch. Ablation 'none' skips training
    entirely and returns the scored random init.
    """
    rng_init = np.random.default_rng(derive_seed(cfg.seed, 0))
    params = model.init_params(corpus.dim, rng_init)
    active = _ABLATION_ACTIVE[cfg.ablation]

    val_eps = sample_validation_episodes(corpus, cfg) if cfg.val_episodes > 0 else []

    def score(p: model.HyperClassParams) -> float:
        if not val_eps:
            return float("nan")
        return validation_score(p, val_eps, cfg.test_adapt, cfg.selection_metric)

    if cfg.ablation == "none" or cfg.meta_batches == 0:
        return model.Checkpoint(params=params, config=cfg.to_dict(),
                                best_validation_score=score(params), meta_batch_index=0)

    state = AdamState.like(params)
    best_params = params.copy()
    best_score = -np.inf
    best_batch = 0

    for batch in range(1, cfg.meta_batches + 1):
        grad_sum = {n: np.zeros_like(getattr(params, n)) for n in model.PARAM_NAMES}
        loss_sum = 0.0
        for j in range(cfg.tasks_per_batch):
            ep_rng = np.random.default_rng(
                derive_seed(cfg.seed, (batch - 1) * cfg.tasks_per_batch + j + 1))
            episode = sample_episode(corpus, "train", cfg.task, ep_rng)
            adapted = model.adapt(params, episode.support_features,
                                  episode.support_labels, cfg.inner)
            # First-order update: query gradient at the adapted parameters is
            # applied to the shared initialization.
            g = model.grads(adapted, episode.query_features, episode.query_labels)
            loss_sum += model.bce_objective(adapted, episode.query_features,
                                            episode.query_labels)
            grad_sum["v"] += g.dv
            grad_sum["P"] += g.dP
            grad_sum["b"] += g.db
        mean_loss = loss_sum / cfg.tasks_per_batch
        if not np.isfinite(mean_loss):
            raise FloatingPointError(
                f"meta-batch {batch}: query loss became non-finite ({mean_loss})")
        grad_mean = {n: a / cfg.tasks_per_batch for n, a in grad_sum.items()}
        params = adam_step(state, params, grad_mean, cfg.outer_lr,
                           cfg.outer_weight_decay, active)

        val = None
        if val_eps and (batch % cfg.eval_every == 0 or batch == cfg.meta_batches):
            val = score(params)
            if val > best_score:
                best_score = val
                best_params = params.copy()
                best_batch = batch
        if progress is not None:
            progress(batch, mean_loss, val)

    if not val_eps:
        best_params, best_score, best_batch = params, float("nan"), cfg.meta_batches
    return model.Checkpoint(params=best_params, config=cfg.to_dict(),
                            best_validation_score=float(best_score),
                            meta_batch_index=best_batch)


def fsocc_train_config(shots: int | tuple[int, int] = (1, 5), **kw) -> MetaTrainConfig:
    """Meta-train defaults for the one-class regime (AUROC selection)."""
    task = TaskConfig.fsocc(shots=shots)
    kw.setdefault("selection_metric", "AUROC")
    return MetaTrainConfig(task=task, **kw)


def irrf_train_config(**kw) -> MetaTrainConfig:
    """Meta-train defaults for the retrieval regime (AP selection)."""
    kw.setdefault("selection_metric", "AP")
    return MetaTrainConfig(task=TaskConfig.irrf(), **kw)
