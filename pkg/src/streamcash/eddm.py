"""EDDM drift detection over the correctness stream of a deployed model.

The detector tracks the distance between consecutive misclassifications.
Its running mean ``p`` and standard deviation ``s`` (population form,
updated with Welford's recurrence) give the statistic ``p + 2s``. Once
``min_errors`` errors have been seen, the peak of that statistic is
tracked, and a drift fires when ``(p + 2s) / peak < alpha``. Every drift
resets the detector to its initial state. Only the drift level exists;
there is no warning zone.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ALPHA = 0.95
DEFAULT_MIN_ERRORS = 30
# activation gate used when monitoring whole streams (see OrchestratorConfig)
STREAM_MIN_ERRORS = 1000

STABLE = "stable"
DRIFT = "drift"


@dataclass
class EddmState:
    alpha: float = DEFAULT_ALPHA
    min_errors: int = DEFAULT_MIN_ERRORS
    error_count: int = 0
    last_error_position: int | None = None
    last_position: int | None = None
    n_distances: int = 0
    mean: float = 0.0
    m2: float = 0.0
    peak: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.min_errors < 1:
            raise ValueError("min_errors must be >= 1")

    @property
    def std(self) -> float:
        return math.sqrt(self.m2 / self.n_distances) if self.n_distances else 0.0

    @property
    def statistic(self) -> float:
        return self.mean + 2.0 * self.std

    @property
    def ratio(self) -> float | None:
        if self.peak <= 0 or self.error_count < self.min_errors:
            return None
        return self.statistic / self.peak

    def reset(self) -> None:
        last = self.last_position
        self.__init__(self.alpha, self.min_errors)
        self.last_position = last


def _advance(state: EddmState, correct: bool, position: int) -> bool:
    """Update ``state`` in place; True when a drift fires."""
    if state.last_position is not None and position <= state.last_position:
        raise ValueError(
            f"positions must be strictly increasing: got {position} after {state.last_position}"
        )
    if state.last_error_position is None:
        # distances are measured from just before the first instance seen since reset
        state.last_error_position = position - 1
    state.last_position = position
    if correct:
        return False
    distance = position - state.last_error_position
    state.last_error_position = position
    state.error_count += 1
    state.n_distances += 1
    delta = distance - state.mean
    state.mean += delta / state.n_distances
    state.m2 += delta * (distance - state.mean)
    if state.error_count < state.min_errors:
        return False
    stat = state.statistic
    if stat > state.peak:
        state.peak = stat
        return False
    if stat / state.peak < state.alpha:
        state.reset()
        return True
    return False


def eddm_update(state: EddmState, correct: bool, position: int) -> tuple[EddmState, str]:
    """Pure form of one detector step; ``state`` is left untouched."""
    new = copy.copy(state)
    fired = _advance(new, bool(correct), int(position))
    return new, DRIFT if fired else STABLE


class EddmDetector:
    """Mutable detector for the orchestrator's control loop."""

    def __init__(self, alpha: float = DEFAULT_ALPHA, min_errors: int = DEFAULT_MIN_ERRORS):
        self.state = EddmState(alpha, min_errors)

    def update(self, correct: bool, position: int) -> bool:
        return _advance(self.state, bool(correct), int(position))

    def update_many(self, correct, positions) -> list[int]:
        """Feed a correctness vector; returns the positions where drift fired."""
        fired = []
        for c, p in zip(np.asarray(correct, dtype=bool).tolist(), np.asarray(positions).tolist()):
            if _advance(self.state, c, p):
                fired.append(p)
        return fired


def replay(correct, alpha: float = DEFAULT_ALPHA, min_errors: int = DEFAULT_MIN_ERRORS,
           positions=None) -> list[int]:
    """Alarm positions for a stored correctness stream."""
    correct = np.asarray(correct, dtype=bool)
    if positions is None:
        positions = np.arange(len(correct))
    return EddmDetector(alpha, min_errors).update_many(correct, positions)
