"""Ensembles over evaluated pipelines: weighted vote, greedy selection and stacking."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..learners.base import normalize_rows
from ..learners.linear import GLM
from ..learners.pipeline import TrainedModel, emit, fit_pipeline, partial_fit
from ..learners.trees import GradientBoosting
from ..stream import TrainingView
from .core import ScoredModel, accuracy, split_holdout

ENSEMBLE_METHODS = ("vote", "greedy", "stacker")
STACKER_KINDS = ("linear", "gbm")
VOTE_SIZE = 5
GREEDY_SIZE = 10
STACK_SIZE = 5
META_SEED = 0


def _meta_learner(kind: str):
    if kind == "linear":
        return GLM(alpha=1e-3)
    if kind == "gbm":
        return GradientBoosting(n_trees=50, max_depth=3, learning_rate=0.1)
    raise ValueError(f"unknown stacker kind {kind!r}; expected one of {STACKER_KINDS}")


@dataclass(frozen=True)
class EnsembleModel:
    """Members with non-negative weights summing to 1, or a meta-learner over them.

    ``method`` records how the ensemble was built so it can be rebuilt on
    new holdout data after a refit: ``vote`` (weights proportional to
    holdout accuracy), ``greedy`` (selection counts) or ``stacker``.
    """

    members: tuple
    weights: np.ndarray
    combiner: str  # "weighted_vote" | "stacker"
    method: str
    n_classes: int
    stacker_kind: str | None = None
    meta: object = None
    fallback: bool = False

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.members) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("weights must be non-negative, one per member, summing to 1")

    @property
    def configs(self) -> list:
        return [m.config for m in self.members]

    @property
    def degenerate(self) -> bool:
        return any(m.degenerate for m in self.members)

    def member_probas(self, X) -> list[np.ndarray]:
        return [m.predict_proba(X) for m in self.members]

    def combine(self, probas: Sequence[np.ndarray]) -> np.ndarray:
        if self.combiner == "stacker":
            return normalize_rows(self.meta.predict_proba(np.hstack(probas)))
        total = np.zeros_like(probas[0])
        for w, p in zip(self.weights, probas):
            total += w * p
        return total

    def predict_proba(self, X) -> np.ndarray:
        return self.combine(self.member_probas(np.asarray(X, dtype=float)))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def predict_batch(self, batch) -> tuple[np.ndarray, np.ndarray]:
        emit("predict", getattr(batch, "ids", None))
        proba = self.predict_proba(batch.X)
        return np.argmax(proba, axis=1), proba


def _vote_weights(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.sum() <= 0:
        return np.full(len(s), 1.0 / len(s))
    return s / s.sum()


def greedy_selection(probas: Sequence[np.ndarray], y, size: int = GREEDY_SIZE) -> list[int]:
    """Forward selection with replacement of the member that most raises holdout accuracy.

    Returns the chosen indices (with repeats) of the best prefix seen.
    Ties go to the lowest index, and to the shorter prefix.
    """
    y = np.asarray(y)
    chosen: list[int] = []
    total = np.zeros_like(probas[0])
    best_acc, best_len = -1.0, 0
    for step in range(1, size + 1):
        scores = [accuracy(y, np.argmax(total + p, axis=1)) for p in probas]
        j = int(np.argmax(scores))
        chosen.append(j)
        total = total + probas[j]
        if scores[j] > best_acc:
            best_acc, best_len = scores[j], step
    return chosen[:best_len]


def _assemble(models: Sequence[TrainedModel], probas: Sequence[np.ndarray], scores,
              y_hold, method: str, n_classes: int, stacker_kind: str = "linear") -> EnsembleModel:
    if method == "vote":
        return EnsembleModel(tuple(models), _vote_weights(scores), "weighted_vote", "vote", n_classes)
    if method == "greedy":
        picks = greedy_selection(probas, y_hold)
        counts = np.bincount(picks, minlength=len(models)).astype(float)
        keep = np.flatnonzero(counts)
        return EnsembleModel(tuple(models[i] for i in keep), counts[keep] / counts.sum(),
                             "weighted_vote", "greedy", n_classes)
    if method == "stacker":
        if len(models) < 2:
            return EnsembleModel((models[0],), np.ones(1), "weighted_vote", "stacker", n_classes,
                                 stacker_kind=stacker_kind, fallback=True)
        meta = _meta_learner(stacker_kind)
        meta.fit(np.hstack(probas), np.asarray(y_hold), n_classes, np.random.default_rng(META_SEED))
        w = np.full(len(models), 1.0 / len(models))
        return EnsembleModel(tuple(models), w, "stacker", "stacker", n_classes,
                             stacker_kind=stacker_kind, meta=meta)
    raise ValueError(f"unknown ensemble method {method!r}; expected one of {ENSEMBLE_METHODS}")


def build_ensemble(scored: Sequence[ScoredModel], holdout: TrainingView, method: str,
                   stacker_kind: str = "linear", k: int | None = None) -> EnsembleModel:
    """Combine evaluated models; ``scored`` should be ranked best first.

    ``vote`` takes the top ``k`` (default 5) weighted by holdout accuracy,
    ``greedy`` selects from all of ``scored``, ``stacker`` fits a
    meta-learner on the holdout probabilities of the top ``k``. A stacker
    with fewer than two members falls back to the single best, flagged.
    """
    if not scored:
        raise ValueError("cannot build an ensemble from an empty history")
    if k is None:
        k = {"vote": VOTE_SIZE, "stacker": STACK_SIZE}.get(method, len(scored))
    top = list(scored[:k])
    n_classes = top[0].model.n_classes
    return _assemble([s.model for s in top], [s.proba for s in top],
                     [s.record.holdout_score for s in top], holdout.y, method, n_classes,
                     stacker_kind)


def rebuild(ensemble: EnsembleModel, models: Sequence[TrainedModel], holdout: TrainingView) -> EnsembleModel:
    """Recompute weights or the meta-learner for ``models`` on ``holdout``."""
    if len(holdout) == 0:
        return replace(ensemble, members=tuple(models))
    probas = [m.predict_proba(holdout.X) for m in models]
    scores = [accuracy(holdout.y, np.argmax(p, axis=1)) for p in probas]
    if ensemble.fallback:
        return replace(ensemble, members=tuple(models))
    return _assemble(models, probas, scores, holdout.y, ensemble.method, ensemble.n_classes,
                     ensemble.stacker_kind or "linear")


def refit_ensemble(ensemble: EnsembleModel, data: TrainingView) -> EnsembleModel:
    """Fit every member's config from scratch on ``data`` and rebuild the combiner."""
    if len(data) == 0:
        raise ValueError("cannot refit on empty data")
    train, holdout = split_holdout(data) if len(data) >= 2 else (data, data.take(slice(0, 0)))
    emit("holdout", holdout.ids)
    models = [fit_pipeline(m.config, train) for m in ensemble.members]
    return rebuild(ensemble, models, holdout)


def increment_ensemble(ensemble: EnsembleModel, data: TrainingView,
                       n_new: int | None = None) -> EnsembleModel:
    """Continue training every member on ``data`` and rebuild the combiner."""
    if len(data) == 0:
        raise ValueError("cannot update on empty data")
    train, holdout = split_holdout(data) if len(data) >= 2 else (data, data.take(slice(0, 0)))
    emit("holdout", holdout.ids)
    models = [partial_fit(m, train, n_new=n_new) for m in ensemble.members]
    return rebuild(ensemble, models, holdout)
