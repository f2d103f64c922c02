"""Adaptation strategies: the batch loop tying detector, search, window and deployed model."""

from __future__ import annotations

import csv
import hashlib
import enum
import io
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .eddm import DEFAULT_ALPHA, STREAM_MIN_ERRORS, EddmDetector
from .evaluation.harness import evaluate_chunk
from .learners.base import INCREMENTAL_KINDS
from .search import FittedAutoML, SearchBudget, increment, refit, run_search
from .search.ensemble import rebuild
from .search.core import split_holdout
from .space import SearchSpace, default_space, restrict
from .stream import Batch, SlidingWindow, Stream, StreamSchema, batchify

DEFAULT_BATCH_SIZE = 1000
PERIODIC_BATCH_SIZE = 20000
WARM_START_SIZE = 5


class StrategyKind(enum.Enum):
    TRAIN_ONCE = "train_once"
    DETECT_INCREMENT = "detect_increment"
    DETECT_RETRAIN = "detect_retrain"
    DETECT_WARMSTART = "detect_warmstart"
    DETECT_RESTART = "detect_restart"
    PERIODIC_RESTART = "periodic_restart"

    @property
    def abbreviation(self) -> str:
        return _ABBREVIATIONS[self]

    @property
    def uses_detector(self) -> bool:
        return self.value.startswith("detect_")

    @classmethod
    def parse(cls, text: str) -> "StrategyKind":
        key = text.strip()
        for kind, abbr in _ABBREVIATIONS.items():
            if key.upper() == abbr or key.lower() == kind.value:
                return kind
        raise ValueError(
            f"unknown strategy {text!r}; expected one of {', '.join(_ABBREVIATIONS.values())}"
        )


_ABBREVIATIONS = {
    StrategyKind.TRAIN_ONCE: "T1",
    StrategyKind.DETECT_INCREMENT: "DI",
    StrategyKind.DETECT_RETRAIN: "DRT",
    StrategyKind.DETECT_WARMSTART: "DWS",
    StrategyKind.DETECT_RESTART: "DRS",
    StrategyKind.PERIODIC_RESTART: "PRS",
}
STRATEGY_ABBREVIATIONS = tuple(_ABBREVIATIONS.values())


@dataclass(frozen=True)
class OrchestratorConfig:
    batch_size: int | None = None  # None: 1000, or 20000 for periodic restart
    window_capacity: int = 3
    paradigm: str = "evo"
    budget: SearchBudget = field(default_factory=lambda: SearchBudget(30.0))
    stacker_kind: str = "linear"
    seed: int = 0
    eddm_alpha: float = DEFAULT_ALPHA
    eddm_min_errors: int = STREAM_MIN_ERRORS
    carry_over_members: bool = False
    increment_trees: int | None = None  # trees/stages appended per update; None: config n_trees
    space: SearchSpace | None = None
    dedup: bool = True

    def __post_init__(self):
        if self.batch_size is not None and self.batch_size < 100:
            raise ValueError(f"batch_size must be >= 100, got {self.batch_size}")
        if self.window_capacity < 1:
            raise ValueError("window_capacity must be >= 1")

    def batch_size_for(self, strategy: StrategyKind) -> int:
        if self.batch_size is not None:
            return self.batch_size
        if strategy is StrategyKind.PERIODIC_RESTART:
            return PERIODIC_BATCH_SIZE
        return DEFAULT_BATCH_SIZE

    def to_json(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "window_capacity": self.window_capacity,
            "paradigm": self.paradigm,
            "budget": self.budget.to_json(),
            "stacker_kind": self.stacker_kind,
            "seed": self.seed,
            "eddm_alpha": self.eddm_alpha,
            "eddm_min_errors": self.eddm_min_errors,
            "carry_over_members": self.carry_over_members,
            "increment_trees": self.increment_trees,
            "dedup": self.dedup,
        }


# ------------------------------------------------------------------------- logs

RUNLOG_COLUMNS = (
    "run_id", "strategy", "paradigm", "seed", "batch_index", "accuracy",
    "drift_detected", "retrained", "pipeline_changed", "fit_seconds", "predict_seconds",
)
TIMING_COLUMNS = ("fit_seconds", "predict_seconds")


@dataclass(frozen=True)
class RunRow:
    run_id: str
    strategy: str
    paradigm: str
    seed: int
    batch_index: int
    accuracy: float
    drift_detected: bool
    retrained: bool
    pipeline_changed: bool
    fit_seconds: float
    predict_seconds: float

    def cells(self) -> list[str]:
        return [
            self.run_id, self.strategy, self.paradigm, str(self.seed), str(self.batch_index),
            repr(float(self.accuracy)), str(int(self.drift_detected)), str(int(self.retrained)),
            str(int(self.pipeline_changed)), f"{self.fit_seconds:.6f}", f"{self.predict_seconds:.6f}",
        ]


@dataclass
class RunLog:
    rows: list[RunRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # per-instance correctness of the deployed model, in stream order (not written to CSV)
    correctness: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def accuracies(self) -> np.ndarray:
        return self.column("accuracy")

    @property
    def batch_indices(self) -> np.ndarray:
        return self.column("batch_index")

    def drift_batches(self) -> list[int]:
        return [r.batch_index for r in self.rows if r.drift_detected]

    def to_csv_text(self, timings: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUNLOG_COLUMNS)
        for r in self.rows:
            cells = r.cells()
            if not timings:
                cells[-2:] = ["", ""]
            w.writerow(cells)
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def read_csv(cls, path) -> "RunLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != RUNLOG_COLUMNS:
                raise ValueError(f"{path}: not a run log (header {header})")
            rows = [
                RunRow(c[0], c[1], c[2], int(c[3]), int(c[4]), float(c[5]), c[6] == "1",
                       c[7] == "1", c[8] == "1", float(c[9] or 0), float(c[10] or 0))
                for c in reader
            ]
        return cls(rows)


# ------------------------------------------------------------------ orchestration


def derive_seed(*keys) -> int:
    """A stable 31-bit seed from integer or string keys."""
    ints = []
    for k in keys:
        if isinstance(k, str):
            # strings become one large integer so they cannot alias integer keys
            ints.append(int.from_bytes(hashlib.sha256(k.encode()).digest(), "big") + 2**64)
        else:
            ints.append(int(k))
    return int(np.random.SeedSequence(ints).generate_state(1)[0] >> 1)


@dataclass
class RunState:
    deployed: FittedAutoML
    window: SlidingWindow
    detector: EddmDetector
    retrains: int = 0
    drifts: int = 0
    pipeline_changes: int = 0


def _space_for(strategy: StrategyKind, config: OrchestratorConfig, schema: StreamSchema) -> SearchSpace:
    restricted = strategy is StrategyKind.DETECT_INCREMENT
    if config.space is None:
        return default_space(schema, restricted_incremental=restricted)
    return restrict(config.space) if restricted and not config.space.restricted_incremental else config.space


def _search(strategy, config, schema, window, batch_index, warm=None) -> FittedAutoML:
    return run_search(
        config.paradigm, _space_for(strategy, config, schema), window.training_view(schema),
        config.budget, seed=derive_seed(config.seed, batch_index), warm_configs=warm,
        stacker_kind=config.stacker_kind, dedup=config.dedup,
    )


def _carry_over(new: FittedAutoML, old: FittedAutoML, schema, window) -> FittedAutoML:
    """Vote over the new members plus the previous ones, reweighted on the new holdout."""
    _, holdout = split_holdout(window.training_view(schema))
    members = list(new.ensemble.members) + list(old.ensemble.members)
    vote = replace(new.ensemble, combiner="weighted_vote", method="vote", meta=None,
                   members=tuple(members), weights=np.full(len(members), 1.0 / len(members)),
                   fallback=False)
    return replace(new, ensemble=rebuild(vote, members, holdout))


def apply_strategy(strategy: StrategyKind, state: RunState, signal: str,
                   config: OrchestratorConfig, schema: StreamSchema, batch_index: int) -> tuple[RunState, bool]:
    """Act on the batch's drift signal; returns the new state and whether anything was trained."""
    drift = signal == "drift"
    if strategy is StrategyKind.TRAIN_ONCE:
        return state, False
    if strategy is StrategyKind.PERIODIC_RESTART:
        deployed = _search(strategy, config, schema, state.window, batch_index)
        return replace(state, deployed=deployed, retrains=state.retrains + 1), True
    if not drift:
        return state, False
    view = state.window.training_view(schema)
    if strategy is StrategyKind.DETECT_INCREMENT:
        deployed = increment(state.deployed, view, n_new=config.increment_trees)
    elif strategy is StrategyKind.DETECT_RETRAIN:
        deployed = refit(state.deployed, view)
    elif strategy is StrategyKind.DETECT_WARMSTART:
        warm = state.deployed.top_configs(WARM_START_SIZE)
        deployed = _search(strategy, config, schema, state.window, batch_index, warm)
        if config.carry_over_members:
            deployed = _carry_over(deployed, state.deployed, schema, state.window)
    elif strategy is StrategyKind.DETECT_RESTART:
        deployed = _search(strategy, config, schema, state.window, batch_index)
    else:  # pragma: no cover
        raise ValueError(strategy)
    return replace(state, deployed=deployed, retrains=state.retrains + 1), True


def run_stream(batches: Sequence[Batch], strategy: StrategyKind | str, config: OrchestratorConfig,
               schema: StreamSchema, preset_drifts: Sequence[int] | None = None,
               run_id: str = "run") -> RunLog:
    """Search on batch 0, then test-then-train every later batch under ``strategy``.

    The detector monitors the deployed model under every strategy, so drift
    flags are logged even where the strategy ignores them. With
    ``preset_drifts`` the detector is bypassed and drift is flagged exactly
    at those batch indices.
    """
    if isinstance(strategy, str):
        strategy = StrategyKind.parse(strategy)
    if len(batches) < 2:
        raise ValueError(f"need at least 2 batches, got {len(batches)}")
    forced = set(int(b) for b in preset_drifts) if preset_drifts is not None else None

    window = SlidingWindow(config.window_capacity).push(batches[0])
    t0 = time.perf_counter()
    try:
        deployed = _search(strategy, config, schema, window, batches[0].index)
    except Exception as exc:
        raise RuntimeError(f"initial search on batch 0 failed: {exc}") from exc
    if strategy is StrategyKind.DETECT_INCREMENT:
        bad = [m.kind for m in deployed.ensemble.members if m.kind not in INCREMENTAL_KINDS]
        if bad:
            raise ValueError(f"detect_increment needs incremental members, got {bad}")
    state = RunState(deployed, window, EddmDetector(config.eddm_alpha, config.eddm_min_errors))
    log = RunLog(meta={
        "run_id": run_id,
        "strategy": strategy.abbreviation,
        "config": config.to_json(),
        "initial_fit_seconds": time.perf_counter() - t0,
        "preset_drifts": sorted(forced) if forced is not None else None,
        "detector_positions": [],
    })

    correctness = []
    for batch in batches[1:]:
        t0 = time.perf_counter()
        acc, correct = evaluate_chunk(state.deployed, batch)
        correctness.append(correct)
        predict_seconds = time.perf_counter() - t0
        fired = state.detector.update_many(correct, batch.ids)
        log.meta["detector_positions"].extend(int(p) for p in fired)
        drift = (batch.index in forced) if forced is not None else bool(fired)

        state = replace(state, window=state.window.push(batch))
        before = state.deployed.incumbent.hash
        t0 = time.perf_counter()
        state, retrained = apply_strategy(strategy, state, "drift" if drift else "stable",
                                          config, schema, batch.index)
        fit_seconds = time.perf_counter() - t0
        changed = state.deployed.incumbent.hash != before
        state = replace(state, drifts=state.drifts + int(drift),
                        pipeline_changes=state.pipeline_changes + int(changed))
        log.rows.append(RunRow(
            run_id, strategy.abbreviation, config.paradigm, config.seed, batch.index,
            acc, drift, retrained, changed, fit_seconds, predict_seconds,
        ))
    log.meta["final_incumbent"] = state.deployed.incumbent.to_json()
    log.correctness = np.concatenate(correctness)
    return log


def run_on_stream(stream: Stream, schema: StreamSchema, strategy: StrategyKind | str,
                  config: OrchestratorConfig, preset_drifts=None, run_id: str = "run") -> RunLog:
    if isinstance(strategy, str):
        strategy = StrategyKind.parse(strategy)
    batches = batchify(stream, config.batch_size_for(strategy))
    return run_stream(batches, strategy, config, schema, preset_drifts, run_id)
