"""Episode construction for the three task regimes.

* ``irrf``: binary, imbalanced and open-set. One positive class; support
  negatives pooled from all other classes but guaranteed to cover at least
  ``min_negative_classes`` distinct classes; query negatives may come from
  classes unseen in the support (at least one unseen class is guaranteed when
  the split has one).
* ``fsocc``: positives-only support, mixed query.
* ``fsor``: N-way class-labeled support; query holds per-class known samples
  plus samples from disjoint unknown classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import FeatureCorpus

_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, index: int) -> int:
    """Deterministic per-task seed: splitmix64 finalizer over base_seed XOR index.

    Used so parallel episode streams stay reproducible regardless of
    scheduling: stream i always sees seed derive_seed(base, i).
    """
    z = (int(base_seed) ^ int(index)) & _MASK64
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class TaskConfig:
    """Episode-shape settings for one of the three regimes.

    ``shots`` and ``support_neg_per_pos`` are scalars or inclusive (lo, hi)
    ranges sampled uniformly per episode, so meta-training can cover a band
    of support sizes and compositions. For fsor, ``query_pos`` counts query
    samples per support class and ``query_neg`` per unknown class.
    """

    mode: str = "irrf"
    shots: int | tuple[int, int] = 5
    ways: int = 5
    support_neg_per_pos: float | tuple[float, float] = 4.0
    min_negative_classes: int = 3
    query_pos: int = 15
    query_neg: int = 45
    unknown_classes: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("irrf", "fsocc", "fsor"):
            raise ValueError(f"unknown task mode {self.mode!r}")
        lo, hi = self.shot_range
        if lo < 1 or hi < lo:
            raise ValueError("shots must be >= 1 (or a non-empty (lo, hi) range)")
        rlo, rhi = self.neg_ratio_range
        if rlo < 0 or rhi < rlo:
            raise ValueError("support_neg_per_pos must be >= 0 (or a non-empty range)")
        if self.mode == "fsor" and self.ways < 2:
            raise ValueError("fsor needs ways >= 2")
        if self.mode in ("irrf", "fsor") and self.min_negative_classes < 2:
            raise ValueError("open-set modes need min_negative_classes >= 2")
        if self.query_pos < 1 or self.query_neg < 0:
            raise ValueError("query sizes must be positive")

    @property
    def shot_range(self) -> tuple[int, int]:
        if isinstance(self.shots, tuple):
            return int(self.shots[0]), int(self.shots[1])
        return int(self.shots), int(self.shots)

    @property
    def neg_ratio_range(self) -> tuple[float, float]:
        if isinstance(self.support_neg_per_pos, tuple):
            return float(self.support_neg_per_pos[0]), float(self.support_neg_per_pos[1])
        return float(self.support_neg_per_pos), float(self.support_neg_per_pos)

    @classmethod
    def irrf(cls, **kw) -> "TaskConfig":
        kw.setdefault("shots", (1, 10))
        return cls(mode="irrf", **kw)

    @classmethod
    def fsocc(cls, shots: int = 5, **kw) -> "TaskConfig":
        kw.setdefault("query_pos", 15)
        kw.setdefault("query_neg", 15)
        return cls(mode="fsocc", shots=shots, **kw)

    @classmethod
    def fsor(cls, ways: int = 5, shots: int = 5, **kw) -> "TaskConfig":
        kw.setdefault("query_pos", 15)
        kw.setdefault("query_neg", 15)
        return cls(mode="fsor", ways=ways, shots=shots, **kw)


@dataclass
class Episode:
    """A sampled (support, query) pair. Labels are binary for irrf/fsocc and
    class ids for fsor; ``positive_class`` is -1 for fsor (no single positive
    class exists there)."""

    support_features: np.ndarray
    support_labels: np.ndarray
    query_features: np.ndarray
    query_labels: np.ndarray
    positive_class: int
    negative_classes: frozenset[int]
    support_indices: np.ndarray = field(default=None)
    query_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.positive_class in self.negative_classes:
            raise ValueError("positive_class must not appear among negative_classes")
        if self.support_indices is not None and self.query_indices is not None:
            overlap = set(self.support_indices.tolist()) & set(self.query_indices.tolist())
            if overlap:
                raise ValueError(f"support and query share sample indices: {sorted(overlap)[:5]}")

    @property
    def n(self) -> int:
        return self.support_features.shape[0]

    @property
    def m(self) -> int:
        return self.query_features.shape[0]


def _take(rng: np.random.Generator, pool: np.ndarray, size: int) -> np.ndarray:
    if size > pool.size:
        raise ValueError(f"needed {size} samples but only {pool.size} available")
    return rng.choice(pool, size=size, replace=False)


def sample_episode(corpus: FeatureCorpus, split: str, cfg: TaskConfig,
                   rng: np.random.Generator) -> Episode:
    """Draw one episode from a corpus split; deterministic given the rng state."""
    by_class = corpus.split_class_rows(split)
    classes = sorted(by_class)
    if not classes:
        raise ValueError(f"split {split!r} has no classes")
    lo, hi = cfg.shot_range
    shots = int(rng.integers(lo, hi + 1)) if hi > lo else lo
    rlo, rhi = cfg.neg_ratio_range
    neg_ratio = float(rng.uniform(rlo, rhi)) if rhi > rlo else rlo

    if cfg.mode == "fsor":
        return _sample_fsor(corpus, by_class, classes, cfg, shots, rng)

    pos_class = int(rng.choice(np.asarray(classes)))
    pos_rows = by_class[pos_class]
    others = [c for c in classes if c != pos_class]

    if cfg.mode == "fsocc":
        n_support_neg = 0
    else:
        n_support_neg = round(shots * neg_ratio)
        if n_support_neg < cfg.min_negative_classes:
            raise ValueError(
                f"support would hold {n_support_neg} negatives but must span "
                f">= {cfg.min_negative_classes} classes")
        if len(others) < cfg.min_negative_classes:
            raise ValueError(
                f"split {split!r} has {len(others)} negative classes, "
                f"needs >= {cfg.min_negative_classes}")

    if pos_rows.size < shots + cfg.query_pos:
        raise ValueError(
            f"class {pos_class} has {pos_rows.size} samples in {split!r}, "
            f"needs {shots + cfg.query_pos}")
    perm = rng.permutation(pos_rows)
    support_pos = perm[:shots]
    query_pos = perm[shots:shots + cfg.query_pos]

    support_neg = np.empty(0, dtype=np.int64)
    support_neg_classes: set[int] = set()
    if n_support_neg:
        seed_classes = rng.choice(np.asarray(others), size=cfg.min_negative_classes, replace=False)
        picks = [int(_take(rng, by_class[int(c)], 1)[0]) for c in seed_classes]
        support_neg_classes = {int(c) for c in seed_classes}
        pooled = np.concatenate([by_class[c] for c in others])
        pooled = pooled[~np.isin(pooled, np.asarray(picks, dtype=np.int64))]
        extra = _take(rng, pooled, n_support_neg - len(picks))
        support_neg = np.concatenate([np.asarray(picks, dtype=np.int64), extra])
        support_neg_classes.update(int(corpus.class_labels[i]) for i in extra.tolist())

    neg_pool = np.concatenate([by_class[c] for c in others])
    neg_pool = neg_pool[~np.isin(neg_pool, support_neg)]
    query_neg = _take(rng, neg_pool, cfg.query_neg)

    if cfg.mode == "irrf" and cfg.query_neg > 0:
        # Open-set guarantee: at least one query negative from a class unseen
        # in the support, whenever such a class exists in the split.
        drawn_classes = {int(corpus.class_labels[i]) for i in query_neg.tolist()}
        unseen = [c for c in others if c not in support_neg_classes]
        if unseen and not (drawn_classes - support_neg_classes):
            cls = int(rng.choice(np.asarray(unseen)))
            replacement = _take(rng, by_class[cls], 1)
            query_neg = np.concatenate([query_neg[:-1], replacement])

    support_idx = np.concatenate([support_pos, support_neg]).astype(np.int64)
    query_idx = np.concatenate([query_pos, query_neg]).astype(np.int64)
    neg_classes = frozenset(
        int(corpus.class_labels[i]) for i in np.concatenate([support_neg, query_neg]).tolist())
    return Episode(
        support_features=corpus.data[support_idx].astype(np.float64),
        support_labels=np.concatenate([np.ones(support_pos.size, dtype=np.int64),
                                       np.zeros(support_neg.size, dtype=np.int64)]),
        query_features=corpus.data[query_idx].astype(np.float64),
        query_labels=np.concatenate([np.ones(query_pos.size, dtype=np.int64),
                                     np.zeros(query_neg.size, dtype=np.int64)]),
        positive_class=pos_class,
        negative_classes=neg_classes,
        support_indices=support_idx,
        query_indices=query_idx,
    )


def _sample_fsor(corpus, by_class, classes, cfg: TaskConfig, shots: int,
                 rng: np.random.Generator) -> Episode:
    needed = cfg.ways + cfg.unknown_classes
    if len(classes) < needed:
        raise ValueError(f"fsor needs {needed} classes, split has {len(classes)}")
    chosen = rng.choice(np.asarray(classes), size=needed, replace=False)
    support_classes = [int(c) for c in chosen[:cfg.ways]]
    unknown_classes = [int(c) for c in chosen[cfg.ways:]]

    support_idx, support_lab, query_idx, query_lab = [], [], [], []
    for c in support_classes:
        rows = by_class[c]
        if rows.size < shots + cfg.query_pos:
            raise ValueError(f"class {c} has {rows.size} samples, needs {shots + cfg.query_pos}")
        perm = rng.permutation(rows)
        support_idx.append(perm[:shots])
        support_lab.extend([c] * shots)
        query_idx.append(perm[shots:shots + cfg.query_pos])
        query_lab.extend([c] * cfg.query_pos)
    for c in unknown_classes:
        picks = _take(rng, by_class[c], cfg.query_neg)
        query_idx.append(picks)
        query_lab.extend([c] * cfg.query_neg)

    support_idx = np.concatenate(support_idx).astype(np.int64)
    query_idx = np.concatenate(query_idx).astype(np.int64)
    return Episode(
        support_features=corpus.data[support_idx].astype(np.float64),
        support_labels=np.asarray(support_lab, dtype=np.int64),
        query_features=corpus.data[query_idx].astype(np.float64),
        query_labels=np.asarray(query_lab, dtype=np.int64),
        positive_class=-1,
        negative_classes=frozenset(unknown_classes),
        support_indices=support_idx,
        query_indices=query_idx,
    )
