from .forest import (DimensionMismatch, ForestHyper, ForestModel, SingleClassInput, Tree,
                     importance, predict, sort_index, train_forest)
from .metrics import LengthMismatch, accuracy, cohens_kappa, confusion
from .selection import BadTarget, LoocvResult, impute_median, loocv, rfe

__all__ = [
    "BadTarget", "DimensionMismatch", "ForestHyper", "ForestModel", "LengthMismatch",
    "LoocvResult", "SingleClassInput", "Tree", "accuracy", "cohens_kappa", "confusion",
    "importance", "impute_median", "loocv", "predict", "rfe", "sort_index", "train_forest",
]
