"""Command-line entry point: generate, run, sweep, detect, report.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation import STRATEGY_ABBREVIATIONS, OrchestratorConfig, StrategyKind, run_on_stream
from .baselines import BASELINES, run_baseline
from .eddm import DEFAULT_ALPHA, DEFAULT_MIN_ERRORS, replay
from .generators import DRIFT_KINDS, NoiseSpec, generate_stream, make_spec
from .search import PARADIGMS, SearchBudget
from .stream import (
    StreamSchema,
    batchify,
    ingest_csv,
    read_sidecar,
    sidecar_path,
    write_csv,
    write_sidecar,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------- parsers


def _stream_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("stream source (a CSV file, or a generated stream)")
    g.add_argument("--stream", metavar="CSV", help="ingest this CSV (label in the last column)")
    g.add_argument("--family", choices=("sea", "hyperplane"), default="sea")
    g.add_argument("--n", type=int, default=100_000, help="instances to generate")
    g.add_argument("--drift", choices=DRIFT_KINDS, default="abrupt")
    g.add_argument("--center", type=int, help="drift centre (default n/2)")
    g.add_argument("--window", type=int, help="gradual drift width (default n/5)")
    g.add_argument("--magnitude", type=int, default=4, help="drift magnitude level 1-4")
    g.add_argument("--noise", type=float, default=0.1, help="label flip rate")


def _search_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("search")
    g.add_argument("--paradigm", choices=PARADIGMS, default="evo")
    g.add_argument("--budget-sec", type=float, default=30.0,
                   help="wall-clock seconds per search (0 disables the wall-clock limit)")
    g.add_argument("--max-evals", type=int, help="evaluations per search")
    g.add_argument("--stacker", choices=("linear", "gbm"), default="linear",
                   help="meta-learner for the random-search stack")
    g.add_argument("--batch-size", type=int, help="instances per batch (default 1000; PRS 20000)")
    g.add_argument("--window-batches", type=int, default=3, help="sliding window capacity")
    g.add_argument("--carry-over", action="store_true",
                   help="DWS keeps the previous ensemble members in a vote with the new ones")
    g.add_argument("--preset-drifts", metavar="B1,B2,...",
                   help="flag drift at exactly these batch indices instead of using the detector")
    g.add_argument("--no-timings", action="store_true",
                   help="leave the timing columns empty so repeated runs give identical files")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streamcash", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic drifting stream to CSV plus a sidecar")
    _stream_flags(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="stream.csv", help="output CSV path")
    g.add_argument("--config", help="JSON or YAML file supplying any of these flags")

    r = sub.add_parser("run", help="run strategies or baselines over one stream")
    _stream_flags(r)
    _search_flags(r)
    r.add_argument("--strategy", default="DRS",
                   help=f"comma list of {', '.join(STRATEGY_ABBREVIATIONS + BASELINES)}")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out-dir", default="results", help="directory for run logs")
    r.add_argument("--run-id", help="run log name (default <strategy>_<paradigm>_s<seed>)")
    r.add_argument("--config", help="JSON or YAML file supplying any of these flags")

    s = sub.add_parser("sweep", help="cross one axis of values with seeds")
    _stream_flags(s)
    _search_flags(s)
    s.add_argument("--axis", required=True,
                   choices=("strategy", "magnitude_level", "time_budget", "stacker_kind"))
    s.add_argument("--values", required=True, help="comma list of axis values")
    s.add_argument("--seeds", type=int, default=3, help="seeds per axis value")
    s.add_argument("--strategy", default="DRS", help="strategy when it is not the swept axis")
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--out-dir", default="results")
    s.add_argument("--sweep-id", help="results sub-directory (default derived from the sweep settings)")
    s.add_argument("--config", help="JSON or YAML file supplying any of these flags")

    d = sub.add_parser("detect", help="replay a stored correctness stream through EDDM")
    d.add_argument("--input", required=True,
                   help="CSV with a 'correct' column (0/1), or one 0/1 value per line")
    d.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    d.add_argument("--min-errors", type=int, default=DEFAULT_MIN_ERRORS)
    d.add_argument("--config", help="JSON or YAML file supplying any of these flags")

    p = sub.add_parser("report", help="plots and summary tables from run logs")
    p.add_argument("--inputs", required=True, nargs="+",
                   help="run log CSVs or directories containing them")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-timings", action="store_true", help="omit fit-time columns")
    p.add_argument("--config", help="JSON or YAML file supplying any of these flags")
    return parser


def _subparser(parser, name) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _option_strings(p: argparse.ArgumentParser) -> list[str]:
    return [s for a in p._actions for s in a.option_strings]


def _load_config(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a mapping of flag names to values")
    return data


def parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    sub = _subparser(parser, args.command)
    if extra:
        msgs = []
        for tok in extra:
            flag = tok.split("=", 1)[0]
            if flag.startswith("-"):
                close = difflib.get_close_matches(flag, _option_strings(sub), n=1)
                hint = f" (did you mean {close[0]}?)" if close else ""
                msgs.append(f"unknown flag {flag}{hint}")
            else:
                msgs.append(f"unexpected argument {tok!r}")
        raise UsageError(f"{sub.prog}: " + "; ".join(msgs))
    if getattr(args, "config", None):
        if not Path(args.config).exists():
            raise UsageError(f"config file not found: {args.config}")
        data = _load_config(args.config)
        dests = {a.dest for a in sub._actions if a.dest not in ("help", "config")}
        bad = []
        for key in data:
            dest = key.replace("-", "_")
            if dest not in dests:
                close = difflib.get_close_matches(dest, sorted(dests), n=1)
                bad.append(f"unknown config key {key!r}" + (f" (did you mean {close[0]!r}?)" if close else ""))
        if bad:
            raise UsageError("config validation failed:\n  " + "\n  ".join(bad))
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in data.items()})
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- validation


def _parse_int_list(text, name, problems) -> list[int] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        return [int(t) for t in items]
    except ValueError:
        problems.append(f"{name}: expected comma-separated integers, got {text!r}")
        return None


def validate(args) -> list[str]:
    """Every problem with the parsed arguments (empty when all is well)."""
    problems = []
    cmd = args.command
    if cmd in ("generate", "run", "sweep"):
        stream = getattr(args, "stream", None)
        if stream is not None and not Path(stream).exists():
            problems.append(f"stream file not found: {stream}")
        if stream is None:
            if args.n < 100:
                problems.append(f"--n must be >= 100, got {args.n}")
            if not 1 <= args.magnitude <= 4:
                problems.append(f"--magnitude must be 1-4, got {args.magnitude}")
            if not 0.0 <= args.noise < 0.5:
                problems.append(f"--noise must lie in [0, 0.5), got {args.noise}")
            if args.center is not None and not 0 <= args.center < args.n:
                problems.append(f"--center must lie in [0, n), got {args.center}")
            if args.window is not None and args.window < 1:
                problems.append("--window must be >= 1")
    if cmd in ("run", "sweep"):
        if args.budget_sec < 0:
            problems.append("--budget-sec must be >= 0")
        if args.budget_sec == 0 and args.max_evals is None:
            problems.append("need --budget-sec > 0 or --max-evals")
        if args.max_evals is not None and args.max_evals < 1:
            problems.append("--max-evals must be >= 1")
        if args.batch_size is not None and args.batch_size < 100:
            problems.append(f"--batch-size must be >= 100, got {args.batch_size}")
        if args.window_batches < 1:
            problems.append("--window-batches must be >= 1")
        _parse_int_list(args.preset_drifts, "--preset-drifts", problems)
        strategies = [args.strategy] if cmd == "sweep" else str(args.strategy).split(",")
        for s in strategies:
            if s.strip() in BASELINES:
                continue
            try:
                StrategyKind.parse(s)
            except ValueError as exc:
                problems.append(str(exc))
    if cmd == "sweep":
        if args.seeds < 1:
            problems.append("--seeds must be >= 1")
        if args.jobs < 1:
            problems.append("--jobs must be >= 1")

        try:
            spec = _sweep_spec(args)
            problems.extend(p for p in spec.violations() if "stream file" not in p)
        except (ValueError, TypeError) as exc:
            problems.append(f"--values: {exc}")
    if cmd == "detect":
        if not Path(args.input).exists():
            problems.append(f"input file not found: {args.input}")
        if not 0 < args.alpha < 1:
            problems.append(f"--alpha must lie in (0, 1), got {args.alpha}")
        if args.min_errors < 1:
            problems.append("--min-errors must be >= 1")
    if cmd == "report":
        for item in args.inputs:
            if not Path(item).exists():
                problems.append(f"input not found: {item}")
    return problems


# ------------------------------------------------------------------ commands


def _stream_from_args(args):
    if args.stream is not None:
        hints = {}
        side = sidecar_path(args.stream)
        if side.exists():
            meta = read_sidecar(side)
            if "schema" in meta:
                hints["schema"] = StreamSchema.from_json(meta["schema"])
        schema, stream = ingest_csv(args.stream, hints)
        return schema, stream, []
    spec = _drift_spec(args)
    return generate_stream(args.family, args.n, spec, NoiseSpec(args.noise), seed=args.seed)


def _drift_spec(args):
    kwargs = {}
    if args.center is not None:
        kwargs["center"] = args.center
    if args.window is not None:
        kwargs["window"] = args.window
    return make_spec(args.family, args.drift, args.n, level=args.magnitude, **kwargs)


def cmd_generate(args) -> int:
    spec = _drift_spec(args)
    schema, stream, positions = generate_stream(args.family, args.n, spec, NoiseSpec(args.noise),
                                                seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(stream, out)
    write_sidecar(
        sidecar_path(out), schema=schema.to_json(), family=args.family, n=args.n,
        drift=spec.to_json(), noise=args.noise, seed=args.seed,
        drift_positions=[int(p) for p in positions], version=__version__,
    )
    print(f"wrote {out} ({len(stream)} instances) and {sidecar_path(out)}")
    return EXIT_OK


def _budget(args) -> SearchBudget:
    return SearchBudget(args.budget_sec if args.budget_sec > 0 else None, args.max_evals)


def cmd_run(args) -> int:
    schema, stream, _ = _stream_from_args(args)
    preset = _parse_int_list(args.preset_drifts, "--preset-drifts", [])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in [s.strip() for s in str(args.strategy).split(",") if s.strip()]:
        label = name if name in BASELINES else StrategyKind.parse(name).abbreviation
        default_id = f"{label}_s{args.seed}" if name in BASELINES else f"{label}_{args.paradigm}_s{args.seed}"
        rid = args.run_id or default_id
        if args.run_id and "," in str(args.strategy):
            rid = f"{args.run_id}_{label}"
        if name in BASELINES:
            batches = batchify(stream, args.batch_size or 1000)
            log = run_baseline(name, batches, schema, args.seed, preset, rid)
        else:
            config = OrchestratorConfig(
                batch_size=args.batch_size, window_capacity=args.window_batches,
                paradigm=args.paradigm, budget=_budget(args), stacker_kind=args.stacker,
                seed=args.seed, carry_over_members=args.carry_over,
            )
            log = run_on_stream(stream, schema, label, config, preset, rid)
        timings = not args.no_timings
        if not timings:
            log.meta.pop("initial_fit_seconds", None)
        log.meta["label"] = label
        log.meta["stream"] = (Path(args.stream).stem if args.stream is not None
                              else f"{args.family}_{args.drift}_s{args.seed}")
        (out / f"{rid}.csv").write_text(log.to_csv_text(timings))
        (out / f"{rid}.meta.json").write_text(json.dumps(log.meta, indent=2, sort_keys=True) + "\n")
        if log.correctness is not None:
            start = len(batchify(stream, config.batch_size_for(StrategyKind.parse(label)))[0])
            with open(out / f"{rid}.correct.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["position", "correct"])
                w.writerows(zip(range(start, start + len(log.correctness)),
                                log.correctness.astype(int).tolist()))
        acc = log.accuracies
        print(f"{rid}: mean accuracy {acc.mean():.4f} over {len(acc)} batches, "
              f"drift flags at {log.drift_batches()}, retrains {int(log.column('retrained').sum())}")
    return EXIT_OK


def _sweep_spec(args):
    from .evaluation.sweep import StreamSpec, SweepSpec

    values = args.values
    items = list(values) if isinstance(values, (list, tuple)) else [v.strip() for v in str(values).split(",") if v.strip()]
    if args.axis == "magnitude_level":
        items = [int(v) for v in items]
    elif args.axis == "time_budget":
        items = [float(v) for v in items]
    else:
        items = [str(v) for v in items]
    stream = StreamSpec(args.family, args.drift, args.n, args.magnitude, args.center, args.window,
                        args.noise, args.stream)
    return SweepSpec(
        axis=args.axis, values=tuple(items), seeds=args.seeds, stream=stream,
        strategy=args.strategy, paradigm=args.paradigm,
        budget_sec=args.budget_sec if args.budget_sec > 0 else None, max_evals=args.max_evals,
        stacker_kind=args.stacker, batch_size=args.batch_size, master_seed=args.seed,
        preset_drifts=tuple(_parse_int_list(args.preset_drifts, "", []) or ()) or None,
        timings=not args.no_timings,
    )


def cmd_sweep(args) -> int:
    from .evaluation.sweep import run_sweep

    spec = _sweep_spec(args)
    logs, manifest = run_sweep(spec, args.out_dir, jobs=args.jobs, sweep_id=args.sweep_id)
    directory = Path(args.out_dir) / manifest["sweep_id"]
    print(f"sweep {manifest['sweep_id']}: {len(logs)} runs, {len(manifest['failures'])} failed")
    for rid, err in manifest["failures"].items():
        print(f"  failed {rid}: {err}")
    table = directory / "summary_by_label.csv"
    if table.exists():
        print(f"\n{args.axis} vs accuracy ({table}):")
        with open(table, newline="") as fh:
            for row in csv.DictReader(fh):
                print(f"  {row['label']:>10}  runs={row['runs']}  "
                      f"mean_accuracy={float(row['mean_accuracy']):.4f}  "
                      f"recovered={row['recovered_fraction']}")
    return EXIT_OK if logs else EXIT_RUNTIME


def _read_correctness(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines and not lines[0].replace(".", "", 1).isdigit():
        header = next(csv.reader([lines[0]]))
        if "correct" not in header:
            raise ValueError(f"{path}: header has no 'correct' column")
        col = header.index("correct")
        values = [next(csv.reader([ln]))[col] for ln in lines[1:]]
    else:
        values = lines
    out = []
    for v in values:
        f = float(v)
        if f not in (0.0, 1.0):
            raise ValueError(f"{path}: correctness values must be 0 or 1, got {v!r}")
        out.append(f == 1.0)
    return np.asarray(out, dtype=bool)


def cmd_detect(args) -> int:
    correct = _read_correctness(args.input)
    positions = replay(correct, args.alpha, args.min_errors)
    print(f"{len(positions)} drift alarm(s) over {len(correct)} instances")
    for p in positions:
        print(p)
    return EXIT_OK


def cmd_report(args) -> int:
    from .adaptation import RunLog
    from .evaluation.report import render_report

    paths = []
    for item in args.inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.glob("*.csv") if _is_runlog(q)))
        else:
            paths.append(p)
    if not paths:
        raise UsageError("no run logs found in the given inputs")
    logs = []
    for p in paths:
        log = RunLog.read_csv(p)
        meta = p.with_name(p.stem + ".meta.json")
        if meta.exists():
            log.meta = json.loads(meta.read_text())
        logs.append(log)
    summaries = render_report(logs, args.out_dir, timings=not args.no_timings)
    print(f"report for {len(summaries)} run(s) written to {args.out_dir}")
    return EXIT_OK


def _is_runlog(path: Path) -> bool:
    from .adaptation import RUNLOG_COLUMNS

    with open(path, newline="") as fh:
        return tuple(next(csv.reader(fh), ())) == RUNLOG_COLUMNS


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "detect": cmd_detect,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
        problems = validate(args)
        if problems:
            raise UsageError("invalid arguments:\n  " + "\n  ".join(problems))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
