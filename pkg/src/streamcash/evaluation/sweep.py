"""Experiment sweeps: one axis of values crossed with seeds, written incrementally."""

from __future__ import annotations

import hashlib
import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .. import __version__
from ..adaptation import OrchestratorConfig, RunLog, StrategyKind, derive_seed, run_on_stream
from ..baselines import BASELINES, run_baseline
from ..generators import NoiseSpec, generate_stream, make_spec
from ..search import SearchBudget
from ..stream import batchify, ingest_csv, read_sidecar, sidecar_path
from .report import render_report

SWEEP_AXES = ("strategy", "magnitude_level", "time_budget", "stacker_kind")


@dataclass(frozen=True)
class StreamSpec:
    """A generated stream, or a CSV file when ``path`` is set."""

    family: str = "sea"
    drift: str = "abrupt"
    n: int = 100_000
    level: int = 4
    center: int | None = None
    window: int | None = None
    noise: float = 0.1
    path: str | None = None

    def build(self, seed: int, level: int | None = None):
        if self.path is not None:
            hints = {}
            meta = sidecar_path(self.path)
            if meta.exists():
                side = read_sidecar(meta)
                if "schema" in side:
                    from ..stream import StreamSchema

                    hints["schema"] = StreamSchema.from_json(side["schema"])
            schema, stream = ingest_csv(self.path, hints)
            return schema, stream, []
        level = self.level if level is None else level
        kwargs = {}
        if self.center is not None:
            kwargs["center"] = self.center
        if self.window is not None:
            kwargs["window"] = self.window
        spec = make_spec(self.family, self.drift, self.n, level=level, **kwargs)
        return generate_stream(self.family, self.n, spec, NoiseSpec(self.noise), seed=seed)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    seeds: int = 1
    stream: StreamSpec = field(default_factory=StreamSpec)
    strategy: str = "DRS"
    paradigm: str = "evo"
    budget_sec: float | None = 30.0
    max_evals: int | None = None
    stacker_kind: str = "linear"
    batch_size: int | None = None
    master_seed: int = 0
    preset_drifts: tuple | None = None
    timings: bool = True

    def violations(self) -> list[str]:
        out = []
        if self.axis not in SWEEP_AXES:
            out.append(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            out.append("at least one axis value is required")
        if self.seeds < 1:
            out.append("at least one seed is required")
        if self.budget_sec is None and self.max_evals is None and self.axis != "time_budget":
            out.append("a wall-clock or evaluation budget is required")
        for v in self.values:
            if self.axis == "strategy":
                if str(v) not in BASELINES:
                    try:
                        StrategyKind.parse(str(v))
                    except ValueError as exc:
                        out.append(str(exc))
            elif self.axis == "magnitude_level" and int(v) not in (1, 2, 3, 4):
                out.append(f"magnitude level must be 1-4, got {v}")
            elif self.axis == "time_budget" and not float(v) > 0:
                out.append(f"time budget must be > 0, got {v}")
            elif self.axis == "stacker_kind" and v not in ("linear", "gbm"):
                out.append(f"stacker kind must be linear or gbm, got {v!r}")
        if self.stream.path is not None and not Path(self.stream.path).exists():
            out.append(f"stream file not found: {self.stream.path}")
        return out

    def to_json(self) -> dict:
        d = asdict(self)
        d["values"] = list(self.values)
        d["preset_drifts"] = list(self.preset_drifts) if self.preset_drifts is not None else None
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "SweepSpec":
        obj = dict(obj)
        obj["stream"] = StreamSpec(**obj.get("stream", {}))
        obj["values"] = tuple(obj["values"])
        if obj.get("preset_drifts") is not None:
            obj["preset_drifts"] = tuple(obj["preset_drifts"])
        return cls(**obj)

    @property
    def sweep_id(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True)
        return f"{self.axis}-{hashlib.sha256(text.encode()).hexdigest()[:8]}"

    def runs(self) -> list[tuple[str, object, int]]:
        return [(run_id(self.axis, v, i), v, i) for v in self.values for i in range(self.seeds)]


def run_id(axis: str, value, seed_index: int) -> str:
    return f"{axis}={value}_s{seed_index}"


def execute_run(spec: SweepSpec, value, seed_index: int) -> RunLog:
    """One cell of the sweep; the stream depends only on the seed index (and level)."""
    rid = run_id(spec.axis, value, seed_index)
    run_seed = derive_seed(spec.master_seed, spec.axis, str(value), seed_index)
    stream_seed = derive_seed(spec.master_seed, "stream", seed_index)
    level = int(value) if spec.axis == "magnitude_level" else None
    schema, stream, positions = spec.stream.build(stream_seed, level)

    strategy = str(value) if spec.axis == "strategy" else spec.strategy
    budget_sec = float(value) if spec.axis == "time_budget" else spec.budget_sec
    stacker = str(value) if spec.axis == "stacker_kind" else spec.stacker_kind
    if strategy in BASELINES:
        batches = batchify(stream, spec.batch_size or 1000)
        log = run_baseline(strategy, batches, schema, run_seed, spec.preset_drifts, rid)
    else:
        config = OrchestratorConfig(
            batch_size=spec.batch_size, paradigm=spec.paradigm,
            budget=SearchBudget(budget_sec, spec.max_evals), stacker_kind=stacker, seed=run_seed,
        )
        log = run_on_stream(stream, schema, strategy, config, spec.preset_drifts, rid)
    log.meta.update({
        "label": str(value),
        "stream": f"seed{seed_index}" if spec.axis != "magnitude_level" else f"level{value}_seed{seed_index}",
        "axis": spec.axis,
        "value": value,
        "seed_index": seed_index,
        "run_seed": run_seed,
        "stream_seed": stream_seed,
        "stream_spec": asdict(spec.stream),
        "true_drift_positions": [int(p) for p in positions],
        "version": __version__,
    })
    if not spec.timings:
        log.meta.pop("initial_fit_seconds", None)
    return log


def _worker(spec_json: dict, value, seed_index: int):
    spec = SweepSpec.from_json(spec_json)
    try:
        log = execute_run(spec, value, seed_index)
        return run_id(spec.axis, value, seed_index), log.to_csv_text(spec.timings), log.meta, None
    except Exception:
        return run_id(spec.axis, value, seed_index), None, None, traceback.format_exc()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _load(directory: Path, rid: str) -> RunLog | None:
    csv_path, meta_path = directory / f"{rid}.csv", directory / f"{rid}.meta.json"
    if not (csv_path.exists() and meta_path.exists()):
        return None
    log = RunLog.read_csv(csv_path)
    log.meta = json.loads(meta_path.read_text())
    return log


def run_sweep(spec: SweepSpec, out_dir="results", jobs: int = 1,
              sweep_id: str | None = None) -> tuple[list[RunLog], dict]:
    """Run every (value, seed) cell, skipping cells whose files already exist.

    Each finished run is written as ``<run-id>.csv`` plus ``<run-id>.meta.json``
    before the next is collected, so an interrupted sweep resumes where it
    stopped. Failed runs are listed in the manifest and the sweep carries on.
    Returns the logs (in cell order) and the manifest.
    """
    problems = spec.violations()
    if problems:
        raise ValueError("invalid sweep spec:\n  " + "\n  ".join(problems))
    directory = Path(out_dir) / (sweep_id or spec.sweep_id)
    directory.mkdir(parents=True, exist_ok=True)
    cells = spec.runs()
    logs: dict[str, RunLog] = {}
    failures: dict[str, str] = {}
    todo = []
    for rid, value, i in cells:
        cached = _load(directory, rid)
        if cached is not None:
            logs[rid] = cached
        else:
            todo.append((rid, value, i))

    def store(rid, text, meta, error):
        if error is not None:
            failures[rid] = error.strip().splitlines()[-1]
            return
        _write_atomic(directory / f"{rid}.csv", text)
        _write_atomic(directory / f"{rid}.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
        logs[rid] = _load(directory, rid)

    spec_json = spec.to_json()
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_worker, spec_json, v, i) for _, v, i in todo]
            for fut in as_completed(futures):
                store(*fut.result())
    else:
        for _, v, i in todo:
            store(*_worker(spec_json, v, i))

    ordered = [logs[rid] for rid, _, _ in cells if rid in logs]
    manifest = {
        "sweep_id": directory.name,
        "spec": spec_json,
        "version": __version__,
        "runs": [rid for rid, _, _ in cells if rid in logs],
        "failures": failures,
    }
    _write_atomic(directory / "sweep.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if ordered:
        render_report(ordered, directory, timings=spec.timings)
    return ordered, manifest
