"""Fitting, predicting and incrementally updating whole pipelines."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from ..stream import TrainingView
from .base import INCREMENTAL_KINDS, NotIncrementalError, normalize_rows
from .linear import LogisticSGD
from .preprocess import make_step
from .simple import KNN, Constant, GaussianNB
from .trees import DecisionTree, GradientBoosting, RandomForest

ESTIMATORS = {
    "decision_tree": DecisionTree,
    "random_forest": RandomForest,
    "gradient_boosted_trees": GradientBoosting,
    "gaussian_naive_bayes": GaussianNB,
    "logistic_sgd": LogisticSGD,
    "knn": KNN,
}

# ---------------------------------------------------------------- instrumentation

_audit_hooks: list[Callable[[str, np.ndarray], None]] = []


@contextmanager
def audit(callback: Callable[[str, np.ndarray], None]):
    """Call ``callback(event, ids)`` for every fit / partial_fit / predict on tracked rows.

    Events are ``"fit"``, ``"partial_fit"`` and ``"predict"``; the harness adds
    ``"test"`` and the searches add ``"holdout"``.
    """
    _audit_hooks.append(callback)
    try:
        yield
    finally:
        _audit_hooks.remove(callback)


def emit(event: str, ids) -> None:
    if ids is None:
        return
    for hook in list(_audit_hooks):
        hook(event, np.asarray(ids))


# ------------------------------------------------------------------------ model


@dataclass(frozen=True)
class TrainedModel:
    config: Any
    steps: tuple
    estimator: Any
    n_classes: int
    n_train: int
    n_features: int
    degenerate: bool = False

    def transform(self, X):
        for step in self.steps:
            X = step.transform(X)
        return X

    def predict_proba(self, X) -> np.ndarray:
        return normalize_rows(self.estimator.predict_proba(self.transform(np.asarray(X, float))))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    @property
    def kind(self) -> str:
        return self.config.learner.kind


def _seed_for(config, seed):
    if seed is not None:
        return np.random.default_rng(seed)
    return np.random.default_rng(int(config.hash[:12], 16))


def fit_pipeline(config, data: TrainingView, seed: int | None = None) -> TrainedModel:
    """Fit preprocessors then the learner on ``data``.

    Without an explicit seed the randomness is derived from the config hash,
    so the same config on the same rows always yields the same model.
    """
    if len(data) == 0:
        raise ValueError("cannot fit on empty data")
    emit("fit", data.ids)
    rng = _seed_for(config, seed)
    n_classes = data.schema.n_classes
    X = np.asarray(data.X, dtype=float)
    d = X.shape[1]
    steps = []
    for spec in config.preprocessors:
        step = make_step(spec.kind, spec.params).fit(X, data.schema)
        X = step.transform(X)
        steps.append(step)
    classes = np.unique(data.y)
    if len(classes) == 1:
        est = Constant(classes[0], n_classes)
        return TrainedModel(config, tuple(steps), est, n_classes, len(data), d, degenerate=True)
    est = ESTIMATORS[config.learner.kind](**config.learner.params)
    est.fit(X, np.asarray(data.y), n_classes, rng)
    return TrainedModel(config, tuple(steps), est, n_classes, len(data), d)


def predict_batch(model: TrainedModel, batch) -> tuple[np.ndarray, np.ndarray]:
    """Class predictions and probability vectors for every row of ``batch``."""
    X = batch.X if hasattr(batch, "X") else batch
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"schema mismatch: model expects {model.n_features} features, got {X.shape}"
        )
    emit("predict", getattr(batch, "ids", None))
    proba = model.predict_proba(X)
    return np.argmax(proba, axis=1), proba


def partial_fit(model: TrainedModel, data: TrainingView, seed: int | None = None,
                n_new: int | None = None) -> TrainedModel:
    """Continue training on ``data`` without changing any hyperparameter.

    Forests and boosting append ``n_new`` trees/stages (default: the
    configured ``n_trees``) grown on the new rows; logistic SGD takes further
    gradient steps from its current weights. Preprocessor statistics are
    updated with a running mean.
    """
    if model.kind not in INCREMENTAL_KINDS:
        raise NotIncrementalError("learner not incremental-capable")
    if len(data) == 0:
        return model
    emit("partial_fit", data.ids)
    rng = _seed_for(model.config, seed) if seed is not None else np.random.default_rng(
        [int(model.config.hash[:12], 16), model.n_train, len(data)]
    )
    X = np.asarray(data.X, dtype=float)
    steps = []
    for step in model.steps:
        step = step.copy().partial_fit(X)
        steps.append(step)
    Xt = X
    for step in steps:
        Xt = step.transform(Xt)
    y = np.asarray(data.y)
    if model.degenerate:
        if len(np.unique(y)) == 1 and y[0] == model.estimator.label:
            return replace(model, steps=tuple(steps), n_train=model.n_train + len(data))
        est = ESTIMATORS[model.kind](**model.config.learner.params)
        if len(np.unique(y)) == 1:
            est = Constant(y[0], model.n_classes)
            return TrainedModel(model.config, tuple(steps), est, model.n_classes,
                                model.n_train + len(data), model.n_features, degenerate=True)
        est.fit(Xt, y, model.n_classes, rng)
        return TrainedModel(model.config, tuple(steps), est, model.n_classes,
                            model.n_train + len(data), model.n_features)
    est = model.estimator.partial_fit(Xt, y, rng, n_new=n_new)
    return TrainedModel(model.config, tuple(steps), est, model.n_classes,
                        model.n_train + len(data), model.n_features)
