"""Probabilistic classifiers: distance-weighted KNN, random forest,
multiclass gradient boosting. All produce per-row class-probability
vectors that sum to 1."""

from .boosting import GradientBoosting, softmax
from .forest import RandomForest
from .knn import KnnClassifier
from .serialize import load_model, save_model
from .tree import Tree, grow_tree

CLASSIFIER_KINDS = {"knn": KnnClassifier, "rf": RandomForest, "gb": GradientBoosting}

__all__ = [
    "GradientBoosting",
    "RandomForest",
    "KnnClassifier",
    "Tree",
    "grow_tree",
    "softmax",
    "save_model",
    "load_model",
    "CLASSIFIER_KINDS",
]
