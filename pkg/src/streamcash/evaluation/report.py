"""Summary tables and accuracy plots for a collection of run logs."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..adaptation import RunLog

RECOVERY_TOLERANCE = 0.02
RECOVERY_SMOOTHING = 5
NEVER = "never"


def recovery_time(accuracies, batch_indices, flag_batch: int, pre_mean: float | None = None,
                  tolerance: float = RECOVERY_TOLERANCE, smoothing: int = RECOVERY_SMOOTHING,
                  pre_start: int | None = None):
    """Batches from a drift flag until accuracy is back near its pre-drift level.

    The pre-drift mean defaults to the mean over rows from ``pre_start``
    (default: the first row) up to, not including, the flagged batch.
    Accuracy counts as recovered at the first batch ``j > flag_batch`` whose
    forward ``smoothing``-batch average is at least ``pre_mean - tolerance``;
    the result is ``j - flag_batch``, or ``"never"`` when no such window
    fits in the run.
    """
    acc = np.asarray(accuracies, dtype=float)
    idx = np.asarray(batch_indices)
    if pre_mean is None:
        lo = idx[0] if pre_start is None else pre_start
        pre = acc[(idx >= lo) & (idx < flag_batch)]
        if len(pre) == 0:
            return NEVER
        pre_mean = float(pre.mean())
    post = np.flatnonzero(idx > flag_batch)
    for start in post:
        window = acc[start:start + smoothing]
        if len(window) < smoothing:
            break
        if window.mean() >= pre_mean - tolerance:
            return int(idx[start] - flag_batch)
    return NEVER


def drift_recoveries(log: RunLog, tolerance: float = RECOVERY_TOLERANCE) -> list[tuple[int, object]]:
    """(flag batch, recovery) for every drift flag; the pre-drift mean restarts after each flag."""
    acc, idx = log.accuracies, log.batch_indices
    flags = log.drift_batches()
    out = []
    prev = None
    for f in flags:
        start = idx[0] if prev is None else prev + 1
        if not np.any((idx >= start) & (idx < f)):
            start = idx[0]
        out.append((f, recovery_time(acc, idx, f, tolerance=tolerance, pre_start=start)))
        prev = f
    return out


@dataclass(frozen=True)
class RunSummary:
    run_id: str
    label: str
    stream: str
    mean_accuracy: float
    n_batches: int
    drifts: int
    first_drift: object
    recovery: object
    retrains: int
    pipeline_changes: int
    total_fit_seconds: float

    FIELDS = ("run_id", "label", "stream", "mean_accuracy", "n_batches", "drifts", "first_drift",
              "recovery_batches", "retrains", "pipeline_changes", "total_fit_seconds")

    def cells(self, timings: bool = True) -> list[str]:
        return [
            self.run_id, self.label, self.stream, repr(self.mean_accuracy), str(self.n_batches),
            str(self.drifts), str(self.first_drift), str(self.recovery), str(self.retrains),
            str(self.pipeline_changes), f"{self.total_fit_seconds:.3f}" if timings else "",
        ]


def _label(log: RunLog) -> str:
    return str(log.meta.get("label", log.rows[0].strategy if log.rows else "run"))


def _stream(log: RunLog) -> str:
    return str(log.meta.get("stream", log.meta.get("run_id", log.rows[0].run_id if log.rows else "run")))


def summarize(log: RunLog) -> RunSummary:
    rec = drift_recoveries(log)
    flags = log.drift_batches()
    return RunSummary(
        run_id=log.rows[0].run_id if log.rows else str(log.meta.get("run_id", "")),
        label=_label(log),
        stream=_stream(log),
        mean_accuracy=float(np.mean(log.accuracies)) if log.rows else float("nan"),
        n_batches=len(log.rows),
        drifts=len(flags),
        first_drift=flags[0] if flags else "none",
        recovery=rec[0][1] if rec else "none",
        retrains=int(np.sum(log.column("retrained"))) if log.rows else 0,
        pipeline_changes=int(np.sum(log.column("pipeline_changed"))) if log.rows else 0,
        total_fit_seconds=float(np.sum(log.column("fit_seconds"))) if log.rows else 0.0,
    )


def _plot(logs: Sequence[RunLog], title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "streamcash-report", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(9, 4.5))
        for i, log in enumerate(sorted(logs, key=_label)):
            idx, acc = log.batch_indices, log.accuracies
            color = f"C{i % 10}"
            ax.plot(idx, acc, color=color, linewidth=1.2, label=_label(log))
            drift = log.column("drift_detected").astype(bool)
            if drift.any():
                ax.plot(idx[drift], acc[drift], linestyle="none", marker="v", markersize=6,
                        color=color)
            changed = log.column("pipeline_changed").astype(bool)
            if changed.any():
                ax.plot(idx[changed], acc[changed], linestyle="none", marker="|", markersize=12,
                        markeredgewidth=2, color="red")
        ax.set_xlabel("batch")
        ax.set_ylabel("accuracy")
        ax.set_title(title)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower left", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def render_report(logs: Sequence[RunLog], out_dir, timings: bool = True) -> list[RunSummary]:
    """Write ``plots/<stream>.svg``, ``summary.csv``, ``summary_by_label.csv`` and ``recovery.csv``.

    One plot per stream with a line per run label; triangles mark drift
    flags and red ticks mark pipeline changes. Output is byte-identical for
    identical logs.
    """
    if not logs:
        raise ValueError("nothing to report: no run logs")
    out = Path(out_dir)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    summaries = [summarize(log) for log in logs]
    order = sorted(range(len(logs)), key=lambda i: (summaries[i].stream, summaries[i].label,
                                                   summaries[i].run_id))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RunSummary.FIELDS)
        for i in order:
            w.writerow(summaries[i].cells(timings))

    with open(out / "recovery.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "drift_batch", "recovery_batches"])
        for i in order:
            for flag, rec in drift_recoveries(logs[i]):
                w.writerow([summaries[i].run_id, flag, rec])

    by_label = defaultdict(list)
    for s in summaries:
        by_label[s.label].append(s)
    with open(out / "summary_by_label.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "runs", "mean_accuracy", "mean_retrains", "mean_fit_seconds",
                    "recovered_fraction"])
        for label in sorted(by_label, key=_label_sort_key):
            group = by_label[label]
            flagged = [s for s in group if s.recovery != "none"]
            recovered = sum(1 for s in flagged if s.recovery != NEVER)
            w.writerow([
                label, len(group),
                repr(float(np.mean([s.mean_accuracy for s in group]))),
                repr(float(np.mean([s.retrains for s in group]))),
                f"{np.mean([s.total_fit_seconds for s in group]):.3f}" if timings else "",
                f"{recovered}/{len(flagged)}",
            ])

    streams = defaultdict(list)
    for log, s in zip(logs, summaries):
        streams[s.stream].append(log)
    for name in sorted(streams):
        _plot(streams[name], name, out / "plots" / f"{_safe(name)}.svg")
    return summaries


def _label_sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in name)


def read_summary_by_label(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
