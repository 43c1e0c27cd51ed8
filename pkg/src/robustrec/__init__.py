"""Adversarially robust, feature-aware explainable recommendation.

Sentiment-annotated reviews become user and item aspect matrices, factor or
neural recommenders train on them under an optional gradient-sign defense,
trained weights face norm-bounded attacks, and the evaluation layer reports
how ranking quality and explanation fidelity survive.
"""
from .aspects import build_matrices, build_x, build_y, split_matrices
from .dataset import (DatasetSplit, IngestError, SplitConfig, SplitError,
                      build_split, dataset_stats, ingest_reviews)
from .evalkit import EvalReport, evaluate, explanation_prf, ndcg_at
from .models import CER, EFM, CERConfig, EFMConfig, build_model
from .robustness import (AttackResult, DefenseConfig, TrainResult, apply_attack,
                         attack_weights, attacked_copy, clip_perturbed_y,
                         defense_loss, fgsm_delta_y, train_defended)

__version__ = "0.1.0"

__all__ = [
    "AttackResult", "CER", "CERConfig", "DatasetSplit", "DefenseConfig", "EFM",
    "EFMConfig", "EvalReport", "IngestError", "SplitConfig", "SplitError",
    "TrainResult", "apply_attack", "attack_weights", "attacked_copy",
    "build_matrices", "build_model", "build_split", "build_x", "build_y",
    "clip_perturbed_y", "dataset_stats", "defense_loss", "evaluate",
    "explanation_prf", "fgsm_delta_y", "ingest_reviews", "ndcg_at",
    "split_matrices", "train_defended",
]
