"""Meta-learned decomposed linear classifiers (W = P v + b) over fixed feature
embeddings: iterative retrieval with relevance feedback, few-shot one-class
classification, open-set detection, a theory-check suite and an interactive
feedback service."""

__version__ = "0.1.0"

from .baselines import RocchioWeights, lr_fit, proto_fit, rocchio_refine
from .corpus import (FeatureCorpus, SyntheticConfig, generate_synthetic,
                     load_corpus, normalize_rows, save_corpus)
from .episodes import Episode, TaskConfig, derive_seed, sample_episode
from .estimators import (GradientLogisticRegression, HyperClassClassifier,
                         PositiveCentroidClassifier, RocchioQueryRefiner, build_method)
from .linear import LinearClassifier, bce_loss, cosine_scores, score, sigmoid
from .metatrain import AdamState, MetaTrainConfig, adam_step, meta_train
from .metrics import (EpisodeReport, auroc, average_precision, f1_and_acc,
                      precision_at_k, ranking_order)
from .model import (AdaptConfig, Checkpoint, FsorHeads, GradientTerms,
                    HyperClassParams, adapt, adapt_transductive, compose,
                    fsor_in_set_score, grads, init_params, load_checkpoint,
                    save_checkpoint)
from .protocols import (IrrfConfig, LearningCurve, evaluate_irrf, run_fsocc,
                        run_fsor, run_irrf, simulate_feedback)

__all__ = [
    "AdaptConfig", "AdamState", "Checkpoint", "Episode", "EpisodeReport",
    "FeatureCorpus", "FsorHeads", "GradientLogisticRegression", "GradientTerms",
    "HyperClassClassifier", "HyperClassParams", "IrrfConfig", "LearningCurve",
    "LinearClassifier", "MetaTrainConfig", "PositiveCentroidClassifier",
    "RocchioQueryRefiner", "RocchioWeights", "SyntheticConfig", "TaskConfig",
    "adam_step", "adapt", "adapt_transductive", "auroc", "average_precision",
    "bce_loss", "build_method", "compose", "cosine_scores", "derive_seed",
    "evaluate_irrf", "f1_and_acc", "fsor_in_set_score", "generate_synthetic",
    "grads", "init_params", "load_checkpoint", "load_corpus", "lr_fit",
    "meta_train", "normalize_rows", "precision_at_k", "proto_fit",
    "ranking_order", "rocchio_refine", "run_fsocc", "run_fsor", "run_irrf",
    "sample_episode", "save_checkpoint", "save_corpus", "score", "sigmoid",
    "simulate_feedback",
]
