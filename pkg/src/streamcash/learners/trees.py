"""Tree learners: a single CART tree, a bagged forest and gradient boosting.

Individual trees are scikit-learn CART trees (Gini, midpoint thresholds,
minimum leaf size 2). Bagging and boosting are done here so new trees or
stages can be appended to an existing model without touching the old ones.
"""

from __future__ import annotations

import numpy as np
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

from .base import one_hot, seed_int

MIN_LEAF = 2


def _f32(X):
    return np.ascontiguousarray(X, dtype=np.float32)


def _tree_proba(tree: DecisionTreeClassifier, X32, n_classes: int) -> np.ndarray:
    out = np.zeros((len(X32), n_classes))
    out[:, tree.classes_.astype(int)] = tree.predict_proba(X32, check_input=False)
    return out


class DecisionTree:
    incremental = False

    def __init__(self, max_depth=10, min_samples_split=2):
        self.max_depth = int(max_depth)
        self.min_samples_split = int(min_samples_split)

    def fit(self, X, y, n_classes, rng):
        self.n_classes = n_classes
        self.tree_ = DecisionTreeClassifier(
            criterion="gini",
            max_depth=self.max_depth,
            min_samples_split=max(self.min_samples_split, 2),
            min_samples_leaf=MIN_LEAF,
            random_state=seed_int(rng),
        ).fit(_f32(X), y)
        return self

    def predict_proba(self, X):
        return _tree_proba(self.tree_, _f32(X), self.n_classes)


class RandomForest:
    """Bootstrap-aggregated CART trees with sqrt(d) features tried per split."""

    incremental = True

    def __init__(self, n_trees=50, max_depth=12):
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.trees_: list = []

    def _grow(self, X32, y, n, rng):
        trees = []
        for _ in range(n):
            rows = rng.integers(0, len(y), size=len(y))
            tree = DecisionTreeClassifier(
                criterion="gini",
                max_depth=self.max_depth,
                min_samples_leaf=MIN_LEAF,
                max_features="sqrt",
                random_state=seed_int(rng),
            )
            trees.append(tree.fit(X32[rows], y[rows]))
        return trees

    def fit(self, X, y, n_classes, rng):
        self.n_classes = n_classes
        self.trees_ = self._grow(_f32(X), y, self.n_trees, rng)
        return self

    def partial_fit(self, X, y, rng, n_new=None):
        """Return a new forest holding the old trees plus ``n_new`` grown on ``X``."""
        n_new = self.n_trees if n_new is None else n_new
        out = object.__new__(RandomForest)
        out.__dict__.update(self.__dict__)
        out.trees_ = list(self.trees_) + self._grow(_f32(X), y, n_new, rng)
        return out

    def predict_proba(self, X):
        X32 = _f32(X)
        total = np.zeros((len(X32), self.n_classes))
        for tree in self.trees_:
            total += _tree_proba(tree, X32, self.n_classes)
        return total / len(self.trees_)


def _log_loss(F, Y):
    """Mean multinomial log-loss of raw scores ``F`` (n, K) or binary logits (n, 1)."""
    if F.shape[1] == 1:
        z = F[:, 0]
        y = Y[:, 1]
        return float(np.mean(np.logaddexp(0.0, z) - y * z))
    m = F.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(F - m).sum(axis=1))
    return float(np.mean(lse - (F * Y).sum(axis=1)))


def _proba_from_scores(F):
    if F.shape[1] == 1:
        p1 = 1.0 / (1.0 + np.exp(-F[:, 0]))
        return np.column_stack([1.0 - p1, p1])
    e = np.exp(F - F.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class _Stage:
    __slots__ = ("trees", "values", "scale")

    def __init__(self, trees, values, scale):
        self.trees = trees
        self.values = values
        self.scale = scale

    def scores(self, X32):
        cols = [v[t.apply(X32, check_input=False)] for t, v in zip(self.trees, self.values)]
        return self.scale * np.column_stack(cols)


class GradientBoosting:
    """Log-loss gradient boosting with Newton leaf values.

    Binary problems use one logit; K > 2 classes use K trees per stage.
    Each stage is accepted with a backtracked multiplier so the training
    log-loss never goes up.
    """

    incremental = True

    def __init__(self, n_trees=100, max_depth=3, learning_rate=0.1):
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.learning_rate = float(learning_rate)
        self.stages_: list[_Stage] = []

    @property
    def n_stages(self) -> int:
        return len(self.stages_)

    def fit(self, X, y, n_classes, rng):
        self.n_classes = n_classes
        Y = one_hot(y, n_classes)
        prior = (Y.sum(axis=0) + 1.0) / (len(y) + n_classes)
        if n_classes == 2:
            self.init_ = np.array([np.log(prior[1] / prior[0])])
        else:
            self.init_ = np.log(prior)
        self.stages_ = []
        self.train_loss_ = []
        X32 = _f32(X)
        F = np.tile(self.init_, (len(y), 1))
        self.stages_ = self._boost(X32, Y, F, self.n_trees, rng, self.train_loss_)
        return self

    def partial_fit(self, X, y, rng, n_new=None):
        """New model = old stages followed by ``n_new`` stages fitted on ``X``."""
        n_new = self.n_trees if n_new is None else n_new
        out = object.__new__(GradientBoosting)
        out.__dict__.update(self.__dict__)
        X32 = _f32(X)
        F = self.decision_function(X32)
        Y = one_hot(y, self.n_classes)
        out.train_loss_ = []
        out.stages_ = list(self.stages_) + self._boost(X32, Y, F, n_new, rng, out.train_loss_)
        return out

    def _boost(self, X32, Y, F, n_stages, rng, losses):
        binary = F.shape[1] == 1
        K = F.shape[1]
        stages = []
        loss = _log_loss(F, Y)
        for _ in range(n_stages):
            P = _proba_from_scores(F)
            if binary:
                residuals = [Y[:, 1] - P[:, 1]]
                hess = [P[:, 1] * (1.0 - P[:, 1])]
                factor = 1.0
            else:
                residuals = [Y[:, k] - P[:, k] for k in range(K)]
                hess = [P[:, k] * (1.0 - P[:, k]) for k in range(K)]
                factor = (K - 1) / K
            trees, values, cols = [], [], []
            for r, h in zip(residuals, hess):
                tree = DecisionTreeRegressor(
                    max_depth=self.max_depth,
                    min_samples_leaf=MIN_LEAF,
                    random_state=seed_int(rng),
                ).fit(X32, r)
                leaf = tree.apply(X32, check_input=False)
                n_nodes = tree.tree_.node_count
                num = np.bincount(leaf, weights=r, minlength=n_nodes)
                den = np.bincount(leaf, weights=h, minlength=n_nodes)
                v = factor * num / np.maximum(den, 1e-12)
                v = np.clip(v, -10.0, 10.0)
                trees.append(tree)
                values.append(self.learning_rate * v)
                cols.append(values[-1][leaf])
            step = np.column_stack(cols)
            scale = 1.0
            for _ in range(20):
                new_loss = _log_loss(F + scale * step, Y)
                if new_loss <= loss:
                    break
                scale *= 0.5
            else:
                scale, new_loss = 0.0, loss
            F = F + scale * step
            loss = new_loss
            losses.append(loss)
            stages.append(_Stage(trees, values, scale))
        return stages

    def decision_function(self, X, n_stages=None):
        X32 = _f32(X)
        F = np.tile(self.init_, (len(X32), 1))
        for stage in self.stages_[:n_stages]:
            F = F + stage.scores(X32)
        return F

    def staged_decision_function(self, X):
        X32 = _f32(X)
        F = np.tile(self.init_, (len(X32), 1))
        yield F
        for stage in self.stages_:
            F = F + stage.scores(X32)
            yield F

    def predict_proba(self, X):
        return _proba_from_scores(self.decision_function(X))
