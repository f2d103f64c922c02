"""Budgets, evaluation records and the bookkeeping shared by every search paradigm."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..learners.pipeline import TrainedModel, emit, fit_pipeline
from ..space import PipelineConfig, SearchSpace, sample_config
from ..stream import TrainingView

HOLDOUT_FRACTION = 0.25
# share of the wall-clock budget kept back for building the ensemble
ENSEMBLE_RESERVE = 0.2
# fitted models kept in memory for ensembling; lower-ranked ones are dropped
MODEL_STORE_SIZE = 25


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchBudget:
    wall_clock_seconds: float | None = None
    max_evaluations: int | None = None
    ensemble_reserve: float = ENSEMBLE_RESERVE

    def __post_init__(self):
        if self.wall_clock_seconds is None and self.max_evaluations is None:
            raise ValueError("budget needs a wall-clock limit or an evaluation limit")
        if self.wall_clock_seconds is not None and not self.wall_clock_seconds > 0:
            raise ValueError("wall_clock_seconds must be > 0")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise ValueError("max_evaluations must be >= 0")
        if not 0.0 <= self.ensemble_reserve < 1.0:
            raise ValueError("ensemble_reserve must lie in [0, 1)")

    @property
    def search_seconds(self) -> float:
        if self.wall_clock_seconds is None:
            return math.inf
        return self.wall_clock_seconds * (1.0 - self.ensemble_reserve)

    def to_json(self) -> dict:
        return {
            "wall_clock_seconds": self.wall_clock_seconds,
            "max_evaluations": self.max_evaluations,
            "ensemble_reserve": self.ensemble_reserve,
        }


@dataclass(frozen=True)
class EvalRecord:
    config: PipelineConfig
    holdout_score: float
    fit_seconds: float
    index: int = 0


@dataclass
class ScoredModel:
    """An evaluated config together with its fitted model and holdout probabilities."""

    record: EvalRecord
    model: TrainedModel
    proba: np.ndarray


def split_holdout(data: TrainingView) -> tuple[TrainingView, TrainingView]:
    """Oldest 75% for training, most recent 25% for validation."""
    n = len(data)
    if n < 2:
        raise ValueError(f"need at least 2 rows to split off a holdout, got {n}")
    n_hold = max(1, int(round(n * HOLDOUT_FRACTION)))
    cut = n - n_hold
    return data.take(slice(0, cut)), data.take(slice(cut, n))


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    return float(np.mean(y_true == np.asarray(y_pred))) if len(y_true) else 0.0


def incumbent_of(history: Sequence[EvalRecord]) -> EvalRecord:
    """Highest holdout score; ties go to the earliest evaluation."""
    best = history[0]
    for rec in history[1:]:
        if rec.holdout_score > best.holdout_score:
            best = rec
    return best


class Evaluator:
    """Runs evaluations under a budget and keeps history, dedup set and model store.

    Paradigms ask ``can_start()`` before every evaluation; once it says no,
    no further evaluation is started. An evaluation already running finishes
    and its record is kept.
    """

    def __init__(self, space: SearchSpace, data: TrainingView, budget: SearchBudget,
                 dedup: bool = True, clock: Callable[[], float] = time.perf_counter):
        self.space = space
        self.train, self.holdout = split_holdout(data)
        self.budget = budget
        self.dedup = dedup
        self.clock = clock
        self.start = clock()
        self.history: list[EvalRecord] = []
        self.seen: set[str] = set()
        self.store: list[ScoredModel] = []
        self._remaining: list[PipelineConfig] | None = None
        if dedup and space.finite and space.size <= 100_000:
            self._remaining = space.enumerate()

    # ---------------------------------------------------------------- budget
    @property
    def elapsed(self) -> float:
        return self.clock() - self.start

    @property
    def exhausted_space(self) -> bool:
        return self._remaining is not None and len(self.seen) >= len(self._remaining)

    def can_start(self) -> bool:
        if self.budget.max_evaluations is not None and len(self.history) >= self.budget.max_evaluations:
            return False
        if self.elapsed >= self.budget.search_seconds:
            return False
        return not self.exhausted_space

    # --------------------------------------------------------------- configs
    def is_new(self, config: PipelineConfig) -> bool:
        return not self.dedup or config.hash not in self.seen

    def unseen(self) -> list[PipelineConfig]:
        """Configs of an enumerable space not evaluated yet (empty if not enumerable)."""
        if self._remaining is None:
            return []
        return [c for c in self._remaining if c.hash not in self.seen]

    def fresh_sample(self, rng: np.random.Generator, tries: int = 50) -> PipelineConfig:
        """A random config, avoiding already evaluated ones when deduplicating."""
        if self._remaining is not None:
            pool = self.unseen()
            if pool:
                return pool[int(rng.integers(len(pool)))]
        for _ in range(tries):
            config = sample_config(self.space, rng)
            if self.is_new(config):
                return config
        return config

    # ------------------------------------------------------------ evaluation
    def evaluate(self, config: PipelineConfig) -> EvalRecord:
        t0 = time.perf_counter()
        model = fit_pipeline(config, self.train)
        emit("holdout", self.holdout.ids)
        proba = model.predict_proba(self.holdout.X)
        score = accuracy(self.holdout.y, np.argmax(proba, axis=1))
        record = EvalRecord(config, score, time.perf_counter() - t0, len(self.history))
        self.history.append(record)
        self.seen.add(config.hash)
        self._keep(ScoredModel(record, model, proba))
        return record

    def _keep(self, item: ScoredModel) -> None:
        self.store.append(item)
        self.store.sort(key=lambda s: (-s.record.holdout_score, s.record.index))
        del self.store[MODEL_STORE_SIZE:]

    def check_started(self) -> None:
        if not self.history:
            raise BudgetExhausted("budget exhausted before first evaluation")

    @property
    def incumbent(self) -> EvalRecord:
        return incumbent_of(self.history)

    def ranked(self, k: int | None = None) -> list[ScoredModel]:
        return self.store[:k]


def write_history_csv(history: Sequence[EvalRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "config_hash", "learner", "holdout_score", "fit_seconds", "config"])
        for rec in history:
            w.writerow([
                rec.index,
                rec.config.hash,
                rec.config.learner_kind,
                repr(rec.holdout_score),
                f"{rec.fit_seconds:.6f}",
                json.dumps(rec.config.to_json(), sort_keys=True),
            ])
