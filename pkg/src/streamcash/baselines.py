"""Online-learning reference methods: Oza bagging, BLAST and a detector-driven GBM."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .adaptation import RunLog, RunRow, derive_seed
from .eddm import DEFAULT_ALPHA, STREAM_MIN_ERRORS, EddmDetector
from .learners.base import DEFAULT_HYPERPARAMS, INCREMENTAL_KINDS, LEARNER_KINDS
from .learners.linear import LogisticSGD
from .learners.pipeline import emit, fit_pipeline, partial_fit
from .space import PipelineConfig
from .stream import Batch, StreamSchema, TrainingView

BASELINES = ("oza", "blast", "gbm")

# ------------------------------------------------------------ Poisson weights

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_POISSON1_CDF = np.cumsum([math.exp(-1.0) / math.factorial(j) for j in range(20)])


def _splitmix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def poisson_weights(seed: int, member: int, positions) -> np.ndarray:
    """Poisson(1) draws that depend only on (seed, member, instance position)."""
    pos = np.asarray(positions, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.uint64(seed) * _GOLDEN + np.uint64(member)) ^ pos
    u = (_splitmix64(key) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.searchsorted(_POISSON1_CDF, u, side="right").astype(np.int64)


# ---------------------------------------------------------- Hoeffding-style tree


class HoeffdingTree:
    """A shallow incremental tree with Gaussian split estimators at the leaves.

    Updates are applied a chunk at a time. A leaf that has absorbed at least
    ``grace_period`` weight since its last split attempt tries every feature
    at a grid of thresholds, estimating class masses on each side from the
    per-class Gaussians, and splits when the information-gain lead of the
    best candidate beats the Hoeffding bound (or the bound drops below ``tau``).
    """

    N_THRESHOLDS = 10

    def __init__(self, n_features: int, n_classes: int, max_depth: int = 3,
                 grace_period: float = 200.0, delta: float = 1e-7, tau: float = 0.05):
        self.n_features, self.n_classes = n_features, n_classes
        self.max_depth, self.grace_period = max_depth, grace_period
        self.delta, self.tau = delta, tau
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.children: list[tuple[int, int] | None] = []
        self.depth: list[int] = []
        self.counts: list[np.ndarray] = []
        self.weight: list[np.ndarray] = []
        self.mean: list[np.ndarray] = []
        self.m2: list[np.ndarray] = []
        self.pending: list[float] = []
        self._new_leaf(0, np.zeros(n_classes))

    def _new_leaf(self, depth: int, counts: np.ndarray) -> int:
        K, d = self.n_classes, self.n_features
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.children.append(None)
        self.depth.append(depth)
        self.counts.append(counts.astype(float))
        self.weight.append(np.zeros(K))
        self.mean.append(np.zeros((K, d)))
        self.m2.append(np.zeros((K, d)))
        self.pending.append(0.0)
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaves_of(self, X) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.max_depth + 1):
            moved = False
            for i in np.unique(node):
                ch = self.children[i]
                if ch is None:
                    continue
                rows = node == i
                go_left = X[rows, self.feature[i]] <= self.threshold[i]
                node[rows] = np.where(go_left, ch[0], ch[1])
                moved = True
            if not moved:
                break
        return node

    def learn(self, X, y, w=None) -> "HoeffdingTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
        keep = w > 0
        X, y, w = X[keep], y[keep], w[keep]
        leaves = self.leaves_of(X)
        for leaf in np.unique(leaves):
            rows = leaves == leaf
            self._absorb(leaf, X[rows], y[rows], w[rows])
            if (self.pending[leaf] >= self.grace_period
                    and self.depth[leaf] < self.max_depth
                    and np.count_nonzero(self.counts[leaf]) > 1):
                self.pending[leaf] = 0.0
                self._try_split(leaf)
        return self

    def _absorb(self, leaf, X, y, w):
        for k in np.unique(y):
            rk = y == k
            wk, Xk = w[rk], X[rk]
            nb = wk.sum()
            mb = (wk[:, None] * Xk).sum(axis=0) / nb
            m2b = (wk[:, None] * (Xk - mb) ** 2).sum(axis=0)
            na = self.weight[leaf][k]
            n = na + nb
            delta = mb - self.mean[leaf][k]
            self.mean[leaf][k] = self.mean[leaf][k] + delta * nb / n
            self.m2[leaf][k] = self.m2[leaf][k] + m2b + delta**2 * na * nb / n
            self.weight[leaf][k] = n
        add = np.bincount(y, weights=w, minlength=self.n_classes)
        self.counts[leaf] = self.counts[leaf] + add
        self.pending[leaf] += float(w.sum())

    @staticmethod
    def _entropy(c):
        c = np.asarray(c, dtype=float)
        tot = c.sum(axis=-1, keepdims=True)
        p = np.divide(c, tot, out=np.zeros_like(c), where=tot > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.where(p > 0, p * np.log2(p), 0.0).sum(axis=-1)
        return h

    def _try_split(self, leaf):
        W = self.weight[leaf]
        present = W > 1
        if present.sum() < 2:
            return
        mean = self.mean[leaf][present]
        sd = np.sqrt(self.m2[leaf][present] / W[present, None]) + 1e-9
        wk = W[present]
        total = wk.sum()
        parent = self._entropy(wk)
        gains = []
        for f in range(self.n_features):
            lo = float(np.min(mean[:, f] - 2 * sd[:, f]))
            hi = float(np.max(mean[:, f] + 2 * sd[:, f]))
            for t in np.linspace(lo, hi, self.N_THRESHOLDS + 2)[1:-1]:
                left = wk * norm.cdf((t - mean[:, f]) / sd[:, f])
                right = wk - left
                child = (left.sum() * self._entropy(left) + right.sum() * self._entropy(right)) / total
                gains.append((parent - child, f, t, left, right))
        gains.sort(key=lambda g: -g[0])
        best = gains[0]
        second = next((g for g in gains[1:] if g[1] != best[1]), (0.0,))
        R = math.log2(max(self.n_classes, 2))
        eps = math.sqrt(R * R * math.log(1.0 / self.delta) / (2.0 * total))
        if best[0] > 0 and (best[0] - second[0] > eps or eps < self.tau):
            left_c = np.zeros(self.n_classes)
            right_c = np.zeros(self.n_classes)
            left_c[present], right_c[present] = best[3], best[4]
            d = self.depth[leaf] + 1
            a = self._new_leaf(d, left_c)
            b = self._new_leaf(d, right_c)
            self.feature[leaf], self.threshold[leaf] = best[1], float(best[2])
            self.children[leaf] = (a, b)

    def predict_proba(self, X) -> np.ndarray:
        leaves = self.leaves_of(np.asarray(X, dtype=float))
        C = np.array(self.counts)[leaves] + 1e-9
        return C / C.sum(axis=1, keepdims=True)


# ------------------------------------------------------------------------ Oza


@dataclass
class OzaEnsemble:
    members: list
    seed: int
    n_classes: int
    rng_counter: int = 0

    @classmethod
    def pretrain(cls, batch: Batch, schema: StreamSchema, seed: int = 0,
                 n_members: int = 10) -> "OzaEnsemble":
        members = []
        for i in range(n_members):
            if i % 2 == 0:
                members.append(HoeffdingTree(schema.n_features, schema.n_classes))
            else:
                members.append(_OnlineLogistic(schema.n_classes))
        ens = cls(members, seed, schema.n_classes)
        ens._train(batch)
        return ens

    def predict(self, X) -> np.ndarray:
        votes = np.zeros((len(X), self.n_classes))
        rows = np.arange(len(X))
        for m in self.members:
            votes[rows, np.argmax(m.predict_proba(X), axis=1)] += 1
        return np.argmax(votes, axis=1)

    def _train(self, batch: Batch) -> None:
        emit("partial_fit", batch.ids)
        for i, m in enumerate(self.members):
            k = poisson_weights(self.seed, i, batch.ids)
            m.learn(batch.X, batch.y, k)


class _OnlineLogistic:
    """Single-pass logistic SGD over a chunk, each row repeated by its weight."""

    def __init__(self, n_classes: int, learning_rate: float = 0.05):
        self.n_classes = n_classes
        self.model = LogisticSGD(learning_rate=learning_rate, alpha=1e-4, epochs=1)
        self.fitted = False
        self.mu = None
        self.sd = None

    def learn(self, X, y, w) -> None:
        rows = np.repeat(np.arange(len(y)), np.asarray(w, dtype=np.int64))
        if len(rows) == 0:
            return
        Xr, yr = np.asarray(X, float)[rows], np.asarray(y)[rows]
        if self.mu is None:
            self.mu, self.sd = Xr.mean(axis=0), Xr.std(axis=0) + 1e-9
        Z = (Xr - self.mu) / self.sd
        # rows stay in arrival order: a one-epoch pass over a fixed-order permutation
        rng = _IdentityPermutation()
        if not self.fitted:
            self.model.fit(Z, yr, self.n_classes, rng)
            self.fitted = True
        else:
            self.model = self.model.partial_fit(Z, yr, rng)

    def predict_proba(self, X) -> np.ndarray:
        if not self.fitted:
            return np.full((len(X), self.n_classes), 1.0 / self.n_classes)
        return self.model.predict_proba((np.asarray(X, float) - self.mu) / self.sd)


class _IdentityPermutation:
    def permutation(self, n):
        return np.arange(n)


def oza_step(ensemble: OzaEnsemble, batch: Batch, timings: dict | None = None) -> tuple[np.ndarray, OzaEnsemble]:
    """Predict the batch by majority vote, then train on it with Poisson(1) weights."""
    emit("test", batch.ids)
    t0 = time.perf_counter()
    pred = ensemble.predict(batch.X)
    if timings is not None:
        timings["predict"] = time.perf_counter() - t0
    ensemble._train(batch)
    return pred, ensemble


# ---------------------------------------------------------------------- BLAST

BLAST_NEW_TREES = 10


def _default_config(kind: str) -> PipelineConfig:
    genes = {"standardize": kind in ("logistic_sgd", "knn"), "variance_threshold": 0.0}
    return PipelineConfig.make(kind, DEFAULT_HYPERPARAMS[kind], genes)


@dataclass
class BlastPool:
    members: list
    accuracies: np.ndarray
    schema: StreamSchema
    switches: list = field(default_factory=list)

    @property
    def active(self) -> int:
        # argmax returns the lowest index among ties
        return int(np.argmax(self.accuracies))

    @classmethod
    def pretrain(cls, batch: Batch, schema: StreamSchema) -> "BlastPool":
        view = TrainingView(batch.X, batch.y, batch.ids, schema)
        members = [fit_pipeline(_default_config(k), view) for k in LEARNER_KINDS]
        return cls(members, np.zeros(len(members)), schema)


def blast_step(pool: BlastPool, batch: Batch, timings: dict | None = None) -> tuple[np.ndarray, BlastPool]:
    """Answer with the member that was best on the previous batch, then update all members."""
    emit("test", batch.ids)
    active = pool.active
    t0 = time.perf_counter()
    pred = np.argmax(pool.members[active].predict_proba(batch.X), axis=1)
    if timings is not None:
        timings["predict"] = time.perf_counter() - t0
    probas = [m.predict_proba(batch.X) for m in pool.members]
    acc = np.array([np.mean(np.argmax(p, axis=1) == batch.y) for p in probas])
    view = TrainingView(batch.X, batch.y, batch.ids, pool.schema)
    members = []
    for m in pool.members:
        if m.kind in INCREMENTAL_KINDS:
            members.append(partial_fit(m, view, n_new=BLAST_NEW_TREES))
        else:
            members.append(fit_pipeline(m.config, view))
    new = BlastPool(members, acc, pool.schema, list(pool.switches))
    if new.active != active:
        new.switches.append((batch.index, active, new.active))
    return pred, new


# ------------------------------------------------------------------------ GBM


@dataclass
class GbmBaseline:
    model: object
    window: list
    schema: StreamSchema
    window_batches: int = 1
    refits: int = 0

    @classmethod
    def pretrain(cls, batch: Batch, schema: StreamSchema, window_batches: int = 1) -> "GbmBaseline":
        view = TrainingView(batch.X, batch.y, batch.ids, schema)
        model = fit_pipeline(_default_config("gradient_boosted_trees"), view)
        return cls(model, [batch], schema, window_batches)


def gbm_baseline_step(state: GbmBaseline, batch: Batch, detector: EddmDetector,
                      forced_drift: bool | None = None, timings: dict | None = None,
                      ) -> tuple[np.ndarray, GbmBaseline, EddmDetector, bool]:
    """Test, feed the detector, and refit from scratch on the window after a drift."""
    emit("test", batch.ids)
    t0 = time.perf_counter()
    pred = state.model.predict(batch.X)
    if timings is not None:
        timings["predict"] = time.perf_counter() - t0
    fired = detector.update_many(pred == batch.y, batch.ids)
    drift = bool(fired) if forced_drift is None else forced_drift
    window = (state.window + [batch])[-state.window_batches:]
    model, refits = state.model, state.refits
    if drift:
        view = TrainingView.from_batches(window, state.schema)
        model = fit_pipeline(model.config, view)
        refits += 1
    return pred, GbmBaseline(model, window, state.schema, state.window_batches, refits), detector, drift


# -------------------------------------------------------------------- runner


def run_baseline(name: str, batches: Sequence[Batch], schema: StreamSchema, seed: int = 0,
                 preset_drifts: Sequence[int] | None = None, run_id: str = "run",
                 eddm_min_errors: int = STREAM_MIN_ERRORS) -> RunLog:
    """Pretrain on batch 0 and test-then-train the rest; rows follow the RunLog schema."""
    if name not in BASELINES:
        raise ValueError(f"unknown baseline {name!r}; expected one of {BASELINES}")
    if len(batches) < 2:
        raise ValueError(f"need at least 2 batches, got {len(batches)}")
    forced = set(preset_drifts) if preset_drifts is not None else None
    detector = EddmDetector(DEFAULT_ALPHA, eddm_min_errors)
    emit("fit", batches[0].ids)
    if name == "oza":
        state = OzaEnsemble.pretrain(batches[0], schema, derive_seed(seed, "oza"))
    elif name == "blast":
        state = BlastPool.pretrain(batches[0], schema)
    else:
        state = GbmBaseline.pretrain(batches[0], schema)
    log = RunLog(meta={"run_id": run_id, "strategy": name, "seed": seed})
    for batch in batches[1:]:
        t0 = time.perf_counter()
        timings: dict = {}
        if name == "gbm":
            f = None if forced is None else batch.index in forced
            pred, state, detector, drift = gbm_baseline_step(state, batch, detector, f, timings)
            retrained = drift
        else:
            step = oza_step if name == "oza" else blast_step
            pred, state = step(state, batch, timings)
            fired = detector.update_many(pred == batch.y, batch.ids)
            drift = bool(fired) if forced is None else batch.index in forced
            retrained = True
        elapsed = time.perf_counter() - t0
        log.rows.append(RunRow(run_id, name, "baseline", seed, batch.index,
                               float(np.mean(pred == batch.y)), drift, retrained, False,
                               elapsed - timings["predict"], timings["predict"]))
    if name == "blast":
        log.meta["switches"] = [list(map(int, s)) for s in state.switches]
    return log
