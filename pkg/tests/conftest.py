import numpy as np
import pytest

from streamcash.generators import NoiseSpec, generate_stream, make_spec
from streamcash.stream import TrainingView, batchify


@pytest.fixture(scope="session")
def sea_nodrift():
    """10 batches of 1000 from a no-drift SEA stream with 10% label noise."""
    schema, stream, _ = generate_stream("sea", 10_000, make_spec("sea", "none", 10_000),
                                        NoiseSpec(0.1), seed=11)
    return schema, batchify(stream, 1000)


@pytest.fixture(scope="session")
def sea_view(sea_nodrift):
    schema, batches = sea_nodrift
    return TrainingView.from_batches(batches[:3], schema)


def blobs(n=400, d=2, seed=0, gap=4.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, d)) + gap * y[:, None]
    return X, y


def grid64():
    """Fully discretized 64-config space: 32 decision trees and 32 k-NN configs."""
    from streamcash.space import HyperparamDomain as H
    from streamcash.space import SearchSpace

    return SearchSpace((
        ("decision_tree", (H.integer("max_depth", 1, 16), H.categorical("min_samples_split", (2, 20)))),
        ("knn", (H.integer("k", 1, 16), H.categorical("weights", ("uniform", "distance")))),
    ))


def small_abrupt(seed=0, n_batches=12, size=500, center_batch=None, level=4):
    """A short abrupt SEA stream cut into batches, drift at ``center_batch``."""
    n = n_batches * size
    center_batch = n_batches // 2 if center_batch is None else center_batch
    spec = make_spec("sea", "abrupt", n, level=level, center=center_batch * size)
    schema, stream, _ = generate_stream("sea", n, spec, NoiseSpec(0.1), seed=seed)
    return schema, batchify(stream, size)


# one (criterion, passed, detail) entry per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda t: int(t[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {name}: {detail}")
