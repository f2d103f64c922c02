"""Random search with stacking, SMBO with a forest surrogate, and steady-state evolution."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm
from sklearn.ensemble import RandomForestRegressor

from ..space import (
    PipelineConfig,
    SearchSpace,
    crossover_configs,
    encode_config,
    mutate_config,
)
from ..stream import TrainingView
from .core import EvalRecord, Evaluator, SearchBudget, incumbent_of
from .ensemble import EnsembleModel, build_ensemble, increment_ensemble, refit_ensemble

PARADIGMS = ("random_stack", "smbo", "evo")

SMBO_INIT = 5
SMBO_CANDIDATES = 500
SMBO_XI = 0.01
SURROGATE_TREES = 50

POPULATION = 20
CROSSOVER_PROB = 0.3
NOVEL_TRIES = 20


@dataclass(frozen=True)
class FittedAutoML:
    ensemble: EnsembleModel
    incumbent: PipelineConfig
    history: tuple
    paradigm: str

    @property
    def incumbent_score(self) -> float:
        return incumbent_of(self.history).holdout_score

    def top_configs(self, k: int = 5) -> list[PipelineConfig]:
        """The ``k`` best distinct configs of the history, best first."""
        ranked = sorted(self.history, key=lambda r: (-r.holdout_score, r.index))
        out, seen = [], set()
        for rec in ranked:
            if rec.config.hash not in seen:
                seen.add(rec.config.hash)
                out.append(rec.config)
            if len(out) == k:
                break
        return out

    def predict_batch(self, batch):
        return self.ensemble.predict_batch(batch)


def _warm_start(ev: Evaluator, warm_configs) -> None:
    for config in warm_configs or ():
        if not ev.can_start():
            return
        if ev.is_new(config):
            ev.evaluate(config)


def _finish(ev: Evaluator, paradigm: str, method: str, stacker_kind: str = "linear") -> FittedAutoML:
    ev.check_started()
    ensemble = build_ensemble(ev.ranked(), ev.holdout, method, stacker_kind)
    return FittedAutoML(ensemble, ev.incumbent.config, tuple(ev.history), paradigm)


def random_search_stack(space: SearchSpace, data: TrainingView, budget: SearchBudget,
                        stacker_kind: str = "linear", seed=0,
                        warm_configs: Sequence[PipelineConfig] | None = None,
                        dedup: bool = True) -> FittedAutoML:
    """Warm configs first, then uniform samples; top 5 are stacked."""
    rng = np.random.default_rng(seed)
    ev = Evaluator(space, data, budget, dedup)
    _warm_start(ev, warm_configs)
    while ev.can_start():
        ev.evaluate(ev.fresh_sample(rng))
    return _finish(ev, "random_stack", "stacker", stacker_kind)


def expected_improvement(mu, sigma, best, xi=SMBO_XI) -> np.ndarray:
    mu, sigma = np.asarray(mu, float), np.asarray(sigma, float)
    imp = mu - best - xi
    out = np.maximum(imp, 0.0)
    pos = sigma > 0
    z = imp[pos] / sigma[pos]
    out[pos] = imp[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return out


def _surrogate_pick(ev: Evaluator, space: SearchSpace, rng: np.random.Generator) -> PipelineConfig:
    X = np.array([encode_config(r.config, space) for r in ev.history])
    y = np.array([r.holdout_score for r in ev.history])
    forest = RandomForestRegressor(
        n_estimators=SURROGATE_TREES, min_samples_leaf=1,
        random_state=int(rng.integers(2**31 - 1)),
    ).fit(X, y)
    pool = ev.unseen()
    if pool and len(pool) <= SMBO_CANDIDATES:
        candidates = pool
    else:
        candidates = []
        for _ in range(SMBO_CANDIDATES):
            c = ev.fresh_sample(rng, tries=5)
            candidates.append(c)
    C = np.array([encode_config(c, space) for c in candidates])
    per_tree = np.stack([t.predict(C) for t in forest.estimators_])
    ei = expected_improvement(per_tree.mean(axis=0), per_tree.std(axis=0), y.max())
    for j in np.argsort(-ei, kind="stable"):
        if ev.is_new(candidates[j]):
            return candidates[j]
    return candidates[int(np.argmax(ei))]


def smbo_search(space: SearchSpace, data: TrainingView, budget: SearchBudget, seed=0,
                warm_configs: Sequence[PipelineConfig] | None = None,
                dedup: bool = True) -> FittedAutoML:
    """Random-forest surrogate with expected improvement; greedy ensemble selection."""
    rng = np.random.default_rng(seed)
    ev = Evaluator(space, data, budget, dedup)
    if warm_configs:
        _warm_start(ev, warm_configs)
    else:
        for _ in range(SMBO_INIT):
            if not ev.can_start():
                break
            ev.evaluate(ev.fresh_sample(rng))
    while ev.can_start():
        ev.evaluate(_surrogate_pick(ev, space, rng))
    return _finish(ev, "smbo", "greedy")


def _tournament(population: list[EvalRecord], rng: np.random.Generator) -> EvalRecord:
    i, j = rng.integers(len(population), size=2)
    a, b = population[i], population[j]
    if a.holdout_score != b.holdout_score:
        return a if a.holdout_score > b.holdout_score else b
    return a if a.index <= b.index else b


def _offspring(population, space, ev: Evaluator, rng) -> PipelineConfig:
    child = None
    for _ in range(NOVEL_TRIES):
        p1 = _tournament(population, rng)
        if rng.random() < CROSSOVER_PROB:
            p2 = _tournament(population, rng)
            base = crossover_configs(p1.config, p2.config, space, rng)
        else:
            base = p1.config
        child = mutate_config(base, space, rng)
        if ev.is_new(child):
            return child
    pool = ev.unseen()
    if pool:
        return pool[int(rng.integers(len(pool)))]
    return child


def evo_search(space: SearchSpace, data: TrainingView, budget: SearchBudget, seed=0,
               warm_configs: Sequence[PipelineConfig] | None = None,
               dedup: bool = True) -> FittedAutoML:
    """Steady-state evolution; the final ensemble is a weighted vote of the top 5.

    Each completed evaluation updates the population immediately, so the
    result does not depend on evaluations finishing in any particular order
    relative to a generation boundary.
    """
    rng = np.random.default_rng(seed)
    ev = Evaluator(space, data, budget, dedup)
    _warm_start(ev, list(warm_configs or ())[:POPULATION])
    while len(ev.history) < POPULATION and ev.can_start():
        ev.evaluate(ev.fresh_sample(rng))
    population = list(ev.history)
    while ev.can_start():
        child = ev.evaluate(_offspring(population, space, ev, rng))
        worst = min(range(len(population)),
                    key=lambda i: (population[i].holdout_score, -population[i].index))
        if child.holdout_score > population[worst].holdout_score:
            population[worst] = child
    return _finish(ev, "evo", "vote")


def run_search(paradigm: str, space: SearchSpace, data: TrainingView, budget: SearchBudget,
               seed=0, warm_configs=None, stacker_kind: str = "linear",
               dedup: bool = True) -> FittedAutoML:
    if paradigm == "random_stack":
        return random_search_stack(space, data, budget, stacker_kind, seed, warm_configs, dedup)
    if paradigm == "smbo":
        return smbo_search(space, data, budget, seed, warm_configs, dedup)
    if paradigm == "evo":
        return evo_search(space, data, budget, seed, warm_configs, dedup)
    raise ValueError(f"unknown paradigm {paradigm!r}; expected one of {PARADIGMS}")


def refit(fitted: FittedAutoML, data: TrainingView) -> FittedAutoML:
    """Refit every member config from scratch on ``data``; configs stay hash-identical."""
    return replace(fitted, ensemble=refit_ensemble(fitted.ensemble, data))


def increment(fitted: FittedAutoML, data: TrainingView, n_new: int | None = None) -> FittedAutoML:
    """Continue training every member on ``data`` with frozen configs."""
    return replace(fitted, ensemble=increment_ensemble(fitted.ensemble, data, n_new))
