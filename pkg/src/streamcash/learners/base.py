"""Learner kinds, their defaults, and small helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

LEARNER_KINDS = (
    "decision_tree",
    "random_forest",
    "gradient_boosted_trees",
    "gaussian_naive_bayes",
    "logistic_sgd",
    "knn",
)
INCREMENTAL_KINDS = frozenset({"random_forest", "gradient_boosted_trees", "logistic_sgd"})
# the kinds a restricted (incremental) search may use
RESTRICTED_KINDS = ("random_forest", "gradient_boosted_trees")

PREPROC_KINDS = ("impute_mean", "one_hot", "variance_filter", "standardize")

DEFAULT_HYPERPARAMS = {
    "decision_tree": {"max_depth": 10, "min_samples_split": 2},
    "random_forest": {"n_trees": 50, "max_depth": 12},
    "gradient_boosted_trees": {"n_trees": 100, "max_depth": 3, "learning_rate": 0.1},
    "gaussian_naive_bayes": {"var_smoothing": 1e-9, "prior": "empirical"},
    "logistic_sgd": {"learning_rate": 0.01, "alpha": 1e-4, "epochs": 5},
    "knn": {"k": 5, "weights": "uniform"},
}


class NotIncrementalError(TypeError):
    pass


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def normalize_rows(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, None)
    s = p.sum(axis=1, keepdims=True)
    empty = s[:, 0] <= 0
    if empty.any():
        p = p.copy()
        p[empty] = 1.0
        s = p.sum(axis=1, keepdims=True)
    return p / s


def seed_int(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))
