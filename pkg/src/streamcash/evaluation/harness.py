"""Test-then-train scoring of one data chunk."""

from __future__ import annotations

import numpy as np

from ..learners.pipeline import emit


def evaluate_chunk(model, batch) -> tuple[float, np.ndarray]:
    """Accuracy and per-instance correctness of ``model`` on ``batch``; the model is not touched.

    ``model`` may expose ``predict_batch`` (returning predictions first) or ``predict``.
    """
    if len(batch) == 0:
        raise ValueError("cannot evaluate an empty batch")
    emit("test", batch.ids)
    if hasattr(model, "predict_batch"):
        pred = model.predict_batch(batch)[0]
    else:
        pred = model.predict(batch.X)
    correct = np.asarray(pred) == np.asarray(batch.y)
    return float(np.mean(correct)), correct


TRAIN_EVENTS = ("fit", "partial_fit", "holdout")


class PurityAudit:
    """Checks test-then-train order from the instrumentation events.

    A row may be trained on (fit, partial_fit or holdout scoring) only after
    it was tested, unless it belongs to ``pretrain_ids`` (the initial batch),
    and no row may be tested once it has been trained on. Use as a context
    manager around a run; ``violations`` lists every breach found.
    """

    def __init__(self, pretrain_ids=()):
        self.pretrain = set(int(i) for i in np.asarray(pretrain_ids).ravel())
        self.tested: set[int] = set()
        self.trained: set[int] = set()
        self.violations: list[str] = []
        self.counts: dict[str, int] = {}
        self._ctx = None

    def __call__(self, event: str, ids) -> None:
        ids = [int(i) for i in np.asarray(ids).ravel()]
        self.counts[event] = self.counts.get(event, 0) + 1
        if event == "test":
            early = [i for i in ids if i in self.trained or i in self.pretrain]
            if early:
                self.violations.append(f"test on {len(early)} rows already trained on (first id {early[0]})")
            self.tested.update(ids)
        elif event in TRAIN_EVENTS:
            unseen = [i for i in ids if i not in self.tested and i not in self.pretrain]
            if unseen:
                self.violations.append(f"{event} on {len(unseen)} untested rows (first id {unseen[0]})")
            self.trained.update(ids)

    def __enter__(self) -> "PurityAudit":
        from ..learners.pipeline import audit

        self._ctx = audit(self)
        self._ctx.__enter__()
        return self

    def __exit__(self, *exc) -> None:
        self._ctx.__exit__(*exc)
        self._ctx = None
