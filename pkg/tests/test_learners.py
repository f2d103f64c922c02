import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import blobs
from streamcash.generators import NoiseSpec, generate_stream, make_spec
from streamcash.learners import (
    LEARNER_KINDS,
    GradientBoosting,
    NotIncrementalError,
    fit_pipeline,
    partial_fit,
    predict_batch,
)
from streamcash.learners.linear import GLM, _augment, loss_and_grad
from streamcash.learners.preprocess import ImputeMean, Standardize, VarianceFilter
from streamcash.space import PipelineConfig
from streamcash.stream import StreamSchema, TrainingView, batchify


def view(X, y, n_classes=2, start=0):
    schema = StreamSchema(X.shape[1], n_classes)
    return TrainingView(np.asarray(X, float), np.asarray(y), np.arange(start, start + len(y)), schema)


def best_stump_accuracy(X, y):
    """Exhaustive search over every axis-aligned threshold and both orientations."""
    best = 0.0
    for j in range(X.shape[1]):
        xs = np.unique(X[:, j])
        for t in np.concatenate([[xs[0] - 1], (xs[:-1] + xs[1:]) / 2]):
            left = X[:, j] <= t
            acc = np.mean(left == (y == 0))
            best = max(best, acc, 1 - acc)
    return best


def test_stump_on_separable_blobs():
    X, y = blobs(300, seed=1, gap=6.0)
    model = fit_pipeline(PipelineConfig.make("decision_tree", {"max_depth": 1}), view(X, y))
    acc = np.mean(model.predict(X) == y)
    oracle = best_stump_accuracy(X, y)
    assert acc >= 0.95
    assert acc <= oracle + 1e-12
    assert acc >= oracle - 0.02


def test_constant_labels_give_degenerate_model():
    X = np.random.default_rng(0).normal(size=(50, 3))
    model = fit_pipeline(PipelineConfig.make("random_forest"), view(X, np.ones(50, int)))
    assert model.degenerate
    pred, proba = predict_batch(model, X)
    assert np.all(pred == 1) and np.all(proba[:, 1] == 1.0)


def test_empty_data_is_error():
    with pytest.raises(ValueError):
        fit_pipeline(PipelineConfig.make("knn"), view(np.empty((0, 2)), np.empty(0, int)))


def test_gbm_on_sea_batch(sea_nodrift):
    schema, batches = sea_nodrift
    cfg = PipelineConfig.make("gradient_boosted_trees", {"n_trees": 50, "max_depth": 3})
    model = fit_pipeline(cfg, TrainingView.from_batches([batches[0]], schema))
    pred, _ = predict_batch(model, batches[1])
    assert np.mean(pred == batches[1].y) >= 0.85


@pytest.mark.parametrize("kind", LEARNER_KINDS)
def test_every_kind_predicts_normalized_probabilities(kind, sea_nodrift):
    schema, batches = sea_nodrift
    model = fit_pipeline(PipelineConfig.make(kind), TrainingView.from_batches([batches[0]], schema))
    pred, proba = predict_batch(model, batches[1])
    assert proba.shape == (1000, 2)
    assert np.all(np.abs(proba.sum(axis=1) - 1) <= 1e-9)
    assert np.array_equal(pred, np.argmax(proba, axis=1))
    assert np.mean(pred == batches[1].y) > 0.6


def test_argmax_tie_breaks_to_lowest_class():
    X = np.zeros((4, 1))
    y = np.array([0, 1, 0, 1])
    model = fit_pipeline(PipelineConfig.make("decision_tree"), view(X, y))
    pred, proba = predict_batch(model, X)
    assert np.allclose(proba, 0.5) and np.all(pred == 0)


def test_knn_one_neighbour_memorizes():
    X = np.random.default_rng(2).normal(size=(200, 4))
    y = np.random.default_rng(3).integers(0, 3, 200)
    model = fit_pipeline(PipelineConfig.make("knn", {"k": 1}), view(X, y, 3))
    assert np.all(model.predict(X) == y)


def test_schema_mismatch():
    X, y = blobs()
    model = fit_pipeline(PipelineConfig.make("gaussian_naive_bayes"), view(X, y))
    with pytest.raises(ValueError, match="schema mismatch"):
        predict_batch(model, np.zeros((3, 5)))


def test_fit_is_deterministic_per_config():
    X, y = blobs(300, d=4, seed=5, gap=1.0)
    cfg = PipelineConfig.make("random_forest", {"n_trees": 10})
    a = fit_pipeline(cfg, view(X, y)).predict_proba(X)
    b = fit_pipeline(cfg, view(X, y)).predict_proba(X)
    assert np.array_equal(a, b)


def test_partial_fit_empty_is_identity():
    X, y = blobs()
    model = fit_pipeline(PipelineConfig.make("logistic_sgd"), view(X, y))
    assert partial_fit(model, view(np.empty((0, 2)), np.empty(0, int))) is model


def test_partial_fit_appends_stages():
    X, y = blobs(400, d=3, seed=7, gap=1.0)
    cfg = PipelineConfig.make("gradient_boosted_trees", {"n_trees": 50, "max_depth": 3})
    model = fit_pipeline(cfg, view(X, y))
    X2, y2 = blobs(200, d=3, seed=8, gap=1.0)
    grown = partial_fit(model, view(X2, y2, start=400), n_new=10)
    assert grown.estimator.n_stages == 60
    assert all(a is b for a, b in zip(grown.estimator.stages_[:50], model.estimator.stages_))
    assert model.estimator.n_stages == 50
    assert grown.config.hash == model.config.hash


def test_partial_fit_forest_keeps_old_trees():
    X, y = blobs(300, d=3, seed=1, gap=1.0)
    model = fit_pipeline(PipelineConfig.make("random_forest", {"n_trees": 10}), view(X, y))
    grown = partial_fit(model, view(X, y), n_new=4)
    assert len(grown.estimator.trees_) == 14
    assert grown.estimator.trees_[:10] == model.estimator.trees_


@pytest.mark.parametrize("kind", ["decision_tree", "gaussian_naive_bayes", "knn"])
def test_partial_fit_rejects_batch_learners(kind):
    X, y = blobs()
    model = fit_pipeline(PipelineConfig.make(kind), view(X, y))
    with pytest.raises(NotIncrementalError, match="learner not incremental-capable"):
        partial_fit(model, view(X, y))


def test_partial_fit_recovers_after_drift():
    wins = 0
    for seed in range(10):
        n = 7000
        spec = make_spec("sea", "abrupt", n, level=4, center=3000)
        schema, stream, _ = generate_stream("sea", n, spec, NoiseSpec(0.1), seed=seed)
        b = batchify(stream, 1000)
        cfg = PipelineConfig.make("gradient_boosted_trees", {"n_trees": 20, "max_depth": 3})
        frozen = fit_pipeline(cfg, TrainingView.from_batches(b[:3], schema))
        updated = partial_fit(frozen, TrainingView.from_batches(b[3:6], schema))
        test = b[6]
        wins += np.mean(updated.predict(test.X) == test.y) > np.mean(frozen.predict(test.X) == test.y)
    assert wins >= 6


def _central_difference(W, Xa, Y, alpha, h=1e-6):
    G = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        E = np.zeros_like(W)
        E[idx] = h
        G[idx] = (loss_and_grad(W + E, Xa, Y, alpha)[0] - loss_and_grad(W - E, Xa, Y, alpha)[0]) / (2 * h)
    return G


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        n, d, k = rng.integers(5, 40), rng.integers(1, 6), rng.integers(2, 5)
        Xa = _augment(rng.normal(size=(n, d)))
        Y = np.eye(k)[rng.integers(0, k, n)]
        W = rng.normal(size=(d + 1, k))
        alpha = 10 ** rng.uniform(-6, -1)
        _, G = loss_and_grad(W, Xa, Y, alpha)
        num = _central_difference(W, Xa, Y, alpha)
        worst = max(worst, np.linalg.norm(G - num) / np.linalg.norm(num))
    assert worst < 1e-4


@pytest.mark.parametrize("n_classes", [2, 3])
def test_boosting_training_loss_never_increases(n_classes):
    rng = np.random.default_rng(n_classes)
    X = rng.normal(size=(300, 4))
    y = (X[:, 0] + rng.normal(scale=0.8, size=300) > 0).astype(int)
    if n_classes == 3:
        y = y + (X[:, 1] > 0.7)
    gb = GradientBoosting(40, 3, 0.3).fit(X, y, n_classes, rng)
    losses = np.array(gb.train_loss_)
    assert len(losses) == 40
    assert np.all(np.diff(losses) <= 1e-12)


def test_glm_reaches_stationary_point():
    X, y = blobs(200, d=3, seed=4, gap=1.0)
    glm = GLM(1e-2).fit(X, y, 2)
    _, G = loss_and_grad(glm.coef_, _augment(X), np.eye(2)[y], 1e-2)
    assert np.abs(G).max() < 1e-4


@given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_running_moments_match_batch_recomputation(chunks, seed):
    rng = np.random.default_rng(seed)
    parts = [rng.normal(loc=rng.uniform(-5, 5), size=(c, 3)) for c in chunks]
    s = Standardize().fit(parts[0])
    for p in parts[1:]:
        s.partial_fit(p)
    full = np.vstack(parts)
    assert np.allclose(s.mean_, full.mean(axis=0), atol=1e-9)
    assert np.allclose(s.var_, full.var(axis=0), atol=1e-8)


def test_impute_fills_training_means():
    X = np.array([[1.0, np.nan], [3.0, 4.0], [np.nan, 8.0]])
    imp = ImputeMean().fit(X)
    assert np.array_equal(imp.transform(X), [[1, 6], [3, 4], [2, 8]])


def test_variance_filter_drops_constant_columns():
    X = np.column_stack([np.ones(20), np.arange(20.0)])
    vf = VarianceFilter(1e-4).fit(X)
    assert vf.transform(X).shape == (20, 1)
