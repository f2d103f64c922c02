import json
import subprocess
import sys
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid64
from streamcash.learners import INCREMENTAL_KINDS, LEARNER_KINDS
from streamcash.space import (
    LEARNER_DOMAINS,
    HyperparamDomain,
    PipelineConfig,
    SearchSpace,
    crossover_configs,
    default_space,
    encode_config,
    mutate_config,
    restrict,
    sample_config,
)
from streamcash.stream import FeatureKind, StreamSchema

SPACE = default_space()


def test_default_space_covers_all_kinds():
    assert SPACE.kinds == list(LEARNER_KINDS)
    assert not SPACE.finite
    assert {d.name for d in SPACE.preprocessors} == {"standardize", "variance_threshold"}


def test_one_hot_gene_only_with_categoricals():
    schema = StreamSchema(2, 2, (FeatureKind(3), FeatureKind()))
    assert "one_hot" in {d.name for d in default_space(schema).preprocessors}


def test_domain_validation():
    with pytest.raises(ValueError):
        HyperparamDomain.integer("x", 5, 5)
    with pytest.raises(ValueError):
        HyperparamDomain.real("x", 0.0, 1.0, log=True)
    with pytest.raises(ValueError):
        HyperparamDomain.categorical("x", ("a",))


def test_restricted_space_samples_only_incremental_ensembles():
    space = restrict(SPACE)
    for seed in range(200):
        assert sample_config(space, seed).learner_kind in {"random_forest", "gradient_boosted_trees"}
    with pytest.raises(ValueError):
        SearchSpace((("knn", LEARNER_DOMAINS["knn"]),), (), True)


def test_sampling_is_seeded():
    assert sample_config(SPACE, 42) == sample_config(SPACE, 42)


def test_kind_frequencies_uniform():
    rng = np.random.default_rng(0)
    counts = Counter(sample_config(SPACE, rng).learner_kind for _ in range(10_000))
    for kind in LEARNER_KINDS:
        assert abs(counts[kind] / 10_000 - 1 / 6) <= 0.02


def test_log_scaled_sampling_uniform_in_log_space():
    d = HyperparamDomain.real("lr", 1e-4, 1e-1, log=True)
    rng = np.random.default_rng(1)
    logs = np.log10([d.sample(rng) for _ in range(20_000)])
    hist, _ = np.histogram(logs, bins=3, range=(-4, -1))
    assert np.all(np.abs(hist / 20_000 - 1 / 3) < 0.02)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_validity_closure(seed):
    rng = np.random.default_rng(seed)
    for space in (SPACE, restrict(SPACE), grid64()):
        a, b = sample_config(space, rng), sample_config(space, rng)
        m = mutate_config(a, space, rng)
        c = crossover_configs(a, b, space, rng)
        assert space.contains(a) and space.contains(m) and space.contains(c)
        assert m != a
        if space.restricted_incremental:
            assert {m.learner_kind, c.learner_kind} <= INCREMENTAL_KINDS


def test_mutation_flips_the_only_bit():
    space = SearchSpace((("knn", (HyperparamDomain.categorical("weights", ("uniform", "distance")),)),))
    cfg = PipelineConfig.make("knn", {"weights": "uniform"})
    assert mutate_config(cfg, space, 0).params == {"weights": "distance"}


def test_mutation_on_single_config_space_returns_parent():
    space = SearchSpace((("knn", ()),))
    cfg = PipelineConfig.make("knn")
    assert mutate_config(cfg, space, 0) == cfg


def test_mutation_swap_rate():
    rng = np.random.default_rng(3)
    start = sample_config(SPACE, 0)
    swaps = sum(mutate_config(start, SPACE, rng).learner_kind != start.learner_kind
                for _ in range(5000))
    assert abs(swaps / 5000 - 0.2) < 0.02


def test_mutation_reaches_whole_grid():
    space = grid64()
    rng = np.random.default_rng(0)
    cfg = sample_config(space, rng)
    seen = {cfg}
    for _ in range(10_000):
        cfg = mutate_config(cfg, space, rng)
        seen.add(cfg)
    assert len(seen) == 64 == len(space.enumerate())


def test_crossover_keeps_hyperparameters_with_their_kind():
    a = PipelineConfig.make("knn", {"k": 3, "weights": "uniform"})
    b = PipelineConfig.make("decision_tree", {"max_depth": 4, "min_samples_split": 2})
    space = grid64()
    for seed in range(50):
        c = crossover_configs(a, b, space, seed)
        assert c.params == (a if c.learner_kind == "knn" else b).params


def test_encoding_bounds_and_inactive_fill():
    space = grid64()
    lo = PipelineConfig.make("decision_tree", {"max_depth": 1, "min_samples_split": 2})
    hi = PipelineConfig.make("decision_tree", {"max_depth": 16, "min_samples_split": 20})
    assert list(encode_config(lo, space)) == [1, 0, 0, 0, -1, -1]
    assert list(encode_config(hi, space)) == [1, 0, 1, 1, -1, -1]


def test_log_encoding():
    d = HyperparamDomain.real("lr", 0.01, 1.0, log=True)
    assert d.scale(0.01) == 0.0 and d.scale(1.0) == 1.0 and d.scale(0.1) == pytest.approx(0.5)


def test_encoding_injective_on_grid():
    space = grid64()
    codes = {tuple(encode_config(c, space)) for c in space.enumerate()}
    assert len(codes) == 64


def test_equal_configs_encode_equally():
    a = sample_config(SPACE, 9)
    b = PipelineConfig.from_json(json.loads(json.dumps(a.to_json())))
    assert a == b and np.array_equal(encode_config(a, SPACE), encode_config(b, SPACE))


def test_hash_matches_canonical_json_digest():
    import hashlib

    cfg = PipelineConfig.make("knn", {"k": 3, "weights": "distance"},
                              {"standardize": True, "variance_threshold": 0.0})
    text = '{"learner":"knn","params":{"k":3,"weights":"distance"},' \
           '"preprocessing":{"standardize":true,"variance_threshold":0.0}}'
    assert cfg.hash == hashlib.sha256(text.encode()).hexdigest()[:16] == "0f63bf46e0b99faf"


def test_hash_stable_across_processes():
    code = ("from streamcash.space import default_space, sample_config;"
            "print(sample_config(default_space(), 123).hash)")
    out = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                          env={"PYTHONHASHSEED": s}, check=True).stdout for s in ("1", "2")}
    assert out == {sample_config(SPACE, 123).hash + "\n"}


def test_numpy_scalars_hash_like_python_scalars():
    a = PipelineConfig.make("knn", {"k": np.int64(3), "weights": "uniform"})
    b = PipelineConfig.make("knn", {"k": 3, "weights": "uniform"})
    assert a.hash == b.hash


def test_space_json_round_trip(tmp_path):
    p = tmp_path / "space.json"
    SPACE.save(p)
    assert SearchSpace.load(p) == SPACE
    assert SearchSpace.from_json(grid64().to_json()).enumerate() == grid64().enumerate()


def test_preprocessor_order():
    cfg = PipelineConfig.make("knn", {}, {"standardize": True, "variance_threshold": 1e-4,
                                          "one_hot": True})
    assert [p.kind for p in cfg.preprocessors] == ["impute_mean", "one_hot", "variance_filter",
                                                   "standardize"]
