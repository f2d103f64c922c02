import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamcash.adaptation import OrchestratorConfig, RunLog, RunRow, run_stream
from streamcash.evaluation import PurityAudit, evaluate_chunk
from streamcash.evaluation.report import NEVER, drift_recoveries, recovery_time, render_report, summarize
from streamcash.evaluation.sweep import StreamSpec, SweepSpec, run_sweep
from streamcash.generators import NoiseSpec, generate_stream, make_spec
from streamcash.search import SearchBudget
from streamcash.stream import Batch, batchify


class _Const:
    def __init__(self, label):
        self.label = label
        self.calls = 0

    def predict(self, X):
        self.calls += 1
        return np.full(len(X), self.label)


def _batch(y):
    y = np.asarray(y)
    return Batch(0, np.zeros((len(y), 1)), y, 0)


def test_all_correct_chunk():
    acc, correct = evaluate_chunk(_Const(1), _batch([1, 1, 1]))
    assert acc == 1.0 and correct.all()


def test_majority_predictor_chunk():
    y = np.array([0] * 7 + [1] * 3)
    acc, correct = evaluate_chunk(_Const(0), _batch(y))
    assert acc == pytest.approx(0.7, abs=1e-12)
    assert abs(acc - correct.mean()) < 1e-12


def test_empty_chunk_rejected():
    with pytest.raises(ValueError):
        evaluate_chunk(_Const(0), _batch([]))


def test_purity_audit_flags_train_before_test():
    from streamcash.learners import emit

    with PurityAudit(pretrain_ids=[0, 1]) as pa:
        emit("fit", [0, 1])
        emit("test", [2, 3])
        emit("fit", [2, 3])
    assert pa.violations == []
    with PurityAudit() as pa:
        emit("fit", [5])
        emit("test", [5])
    assert len(pa.violations) == 2


def _log(accs, drifts=(), changed=(), run_id="r", label=None, stream="s"):
    rows = [RunRow(run_id, "DRS", "evo", 0, i + 1, a, i + 1 in drifts, i + 1 in drifts,
                   i + 1 in changed, 0.5, 0.1) for i, a in enumerate(accs)]
    meta = {"stream": stream}
    if label:
        meta["label"] = label
    return RunLog(rows, meta)


def test_recovery_time_examples():
    acc = [0.9] * 10 + [0.5] * 3 + [0.9] * 10
    idx = np.arange(1, len(acc) + 1)
    assert recovery_time(acc, idx, 11) == 3
    assert recovery_time([0.9] * 10 + [0.5] * 13, idx, 11) == NEVER
    assert recovery_time(acc, idx, 11, pre_mean=0.95, tolerance=0.06) == 3
    # a window too short to average never counts
    assert recovery_time([0.9] * 10 + [0.5, 0.9, 0.9], np.arange(1, 14), 11) == NEVER


@given(st.lists(st.floats(0, 1), min_size=3, max_size=60), st.data())
@settings(max_examples=100, deadline=None)
def test_recovery_is_total(accs, data):
    idx = np.arange(len(accs))
    flag = data.draw(st.integers(0, len(accs) - 1))
    r = recovery_time(accs, idx, flag)
    assert r == NEVER or (isinstance(r, int) and r >= 1)


def test_summary_mean_is_arithmetic_mean():
    accs = list(np.random.default_rng(0).uniform(size=37))
    s = summarize(_log(accs))
    assert abs(s.mean_accuracy - np.mean(accs)) < 1e-12
    assert s.drifts == 0 and s.recovery == "none"


def test_drift_recoveries_restart_pre_mean():
    accs = [0.9] * 10 + [0.5] * 2 + [0.6] * 10 + [0.3] * 2 + [0.6] * 10
    log = _log(accs, drifts=(11, 23))
    rec = dict(drift_recoveries(log))
    assert rec[23] == 2  # measured against the 0.6 plateau, not the 0.9 start


def _capture_figures(monkeypatch):
    import matplotlib.pyplot as plt

    figs = []
    real_close = plt.close

    def close(fig=None):
        figs.append(fig)
        real_close(fig)

    monkeypatch.setattr(plt, "close", close)
    return figs


def test_single_run_without_drift_plots_one_line(tmp_path, monkeypatch):
    figs = _capture_figures(monkeypatch)
    render_report([_log([0.8, 0.82, 0.81], label="T1")], tmp_path)
    ax = figs[0].axes[0]
    assert [line.get_label() for line in ax.lines] == ["T1"]
    assert (tmp_path / "plots" / "s.svg").exists()


def test_markers_for_drift_and_pipeline_change(tmp_path, monkeypatch):
    figs = _capture_figures(monkeypatch)
    render_report([_log([0.8] * 6, drifts=(3,), changed=(3, 5), label="DRT")], tmp_path)
    lines = figs[0].axes[0].lines
    assert len(lines) == 3
    assert lines[2].get_color() == "red" and len(lines[2].get_xdata()) == 2


def test_report_is_byte_identical(tmp_path):
    logs = [_log([0.8, 0.7, 0.9, 0.85] * 5, drifts=(5,), label=l, run_id=l) for l in ("DRS", "T1")]
    render_report(logs, tmp_path / "a")
    render_report(logs, tmp_path / "b")
    for name in ("summary.csv", "recovery.csv", "summary_by_label.csv", "plots/s.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_report_requires_logs(tmp_path):
    with pytest.raises(ValueError):
        render_report([], tmp_path)


@pytest.mark.slow
def test_train_once_never_recovers_on_abrupt_sea():
    n = 100_000
    schema, stream, _ = generate_stream("sea", n, make_spec("sea", "abrupt", n, level=4),
                                        NoiseSpec(0.1), seed=0)
    config = OrchestratorConfig(budget=SearchBudget(max_evaluations=8), seed=0)
    log = run_stream(batchify(stream, 1000), "T1", config, schema)
    assert recovery_time(log.accuracies, log.batch_indices, 50, pre_start=10) == NEVER


def _tiny_spec(**kw):
    base = dict(axis="strategy", values=("T1",), seeds=1,
                stream=StreamSpec("sea", "abrupt", 3000, 4), batch_size=500,
                budget_sec=None, max_evals=2, timings=False)
    base.update(kw)
    return SweepSpec(**base)


def test_sweep_one_cell(tmp_path):
    logs, manifest = run_sweep(_tiny_spec(), tmp_path)
    assert len(logs) == 1 and manifest["failures"] == {}
    files = sorted(p.name for p in (tmp_path / manifest["sweep_id"]).iterdir())
    assert "strategy=T1_s0.csv" in files and "summary.csv" in files and "sweep.json" in files


def test_sweep_rerun_is_bit_identical(tmp_path):
    spec = _tiny_spec(values=("T1", "DRT", "oza"), seeds=2, preset_drifts=(3,))
    run_sweep(spec, tmp_path / "a")
    run_sweep(spec, tmp_path / "b")
    a = tmp_path / "a" / spec.sweep_id
    b = tmp_path / "b" / spec.sweep_id
    names = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len([n for n in names if str(n).endswith(".meta.json")]) == 6
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_sweep_resumes(tmp_path):
    spec = _tiny_spec(values=("T1", "DRS"))
    _, manifest = run_sweep(spec, tmp_path)
    d = tmp_path / manifest["sweep_id"]
    keep = (d / "strategy=T1_s0.csv").stat().st_mtime_ns
    (d / "strategy=DRS_s0.csv").unlink()
    logs, _ = run_sweep(spec, tmp_path)
    assert len(logs) == 2
    assert (d / "strategy=T1_s0.csv").stat().st_mtime_ns == keep
    assert (d / "strategy=DRS_s0.csv").exists()


def test_sweep_records_failures_and_continues(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,label\n1,0\n2\n")
    spec = _tiny_spec(values=("T1", "DRS"), seeds=2, stream=StreamSpec(path=str(bad)))
    logs, manifest = run_sweep(spec, tmp_path / "out")
    assert logs == [] and len(manifest["failures"]) == 4
    assert "row 3" in next(iter(manifest["failures"].values()))


def test_sweep_cardinality(tmp_path):
    spec = _tiny_spec(axis="magnitude_level", values=(1, 4), seeds=2)
    logs, manifest = run_sweep(spec, tmp_path)
    assert len(logs) == 4 - len(manifest["failures"])
    assert {l.meta["stream"] for l in logs} == {"level1_seed0", "level1_seed1", "level4_seed0", "level4_seed1"}


def test_sweep_spec_validation_and_json():
    assert _tiny_spec(axis="colour").violations()
    assert _tiny_spec(axis="magnitude_level", values=(7,)).violations()
    assert _tiny_spec(values=("D&X",)).violations()
    assert _tiny_spec(axis="stacker_kind", values=("ridge",)).violations()
    spec = _tiny_spec(values=("T1", "DRS"), preset_drifts=(2, 4))
    again = SweepSpec.from_json(json.loads(json.dumps(spec.to_json())))
    assert again == spec and again.sweep_id == spec.sweep_id
    with pytest.raises(ValueError, match="invalid sweep spec"):
        run_sweep(_tiny_spec(seeds=0), "unused")


def test_sweep_seeds_derived_from_master(tmp_path):
    a, _ = run_sweep(_tiny_spec(master_seed=1), tmp_path / "a")
    b, _ = run_sweep(_tiny_spec(master_seed=2), tmp_path / "b")
    assert a[0].meta["run_seed"] != b[0].meta["run_seed"]
    assert a[0].meta["stream_seed"] != b[0].meta["stream_seed"]
