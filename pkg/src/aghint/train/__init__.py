"""Optimisation, splits, metrics and evaluation harnesses."""

from .case_study import BucketRow, CaseStudy, bucket_accuracy, case_study, held_out_buckets
from .metrics import accuracy, f1_scores
from .optim import Adam
from .splits import TEST, TRAIN, UNLABELED, VAL, SplitError, split_nodes
from .trainer import (
    Checkpoint,
    MetricsReport,
    NumericError,
    TrainConfig,
    evaluate_logits,
    model_from_checkpoint,
    train,
)

__all__ = [
    "Adam", "BucketRow", "CaseStudy", "Checkpoint", "MetricsReport", "NumericError", "SplitError",
    "TEST", "TRAIN", "TrainConfig", "UNLABELED", "VAL", "accuracy", "bucket_accuracy", "case_study",
    "evaluate_logits", "f1_scores", "held_out_buckets", "model_from_checkpoint", "split_nodes", "train",
]
