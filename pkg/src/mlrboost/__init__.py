"""Online boosting for multi-label ranking."""

from mlrboost.boosters import AdaOLMR, OnlineBMR
from mlrboost.core import Example, LabelSet, make_baseline
from mlrboost.losses import LossKind, hinge_loss, logistic_loss, rank_loss

__all__ = [
    "AdaOLMR",
    "Example",
    "LabelSet",
    "LossKind",
    "OnlineBMR",
    "hinge_loss",
    "logistic_loss",
    "make_baseline",
    "rank_loss",
]
