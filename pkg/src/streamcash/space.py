"""The CASH search space: learner choice, hyperparameter domains, preprocessing genes.

A ``PipelineConfig`` is a flat assignment of genes: the learner kind, that
learner's hyperparameters, and the preprocessing switches. Its hash is a
digest of a canonical JSON rendering, so it is stable across processes.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .learners.base import INCREMENTAL_KINDS, LEARNER_KINDS, RESTRICTED_KINDS

# ------------------------------------------------------------------------- domains


@dataclass(frozen=True)
class HyperparamDomain:
    name: str
    kind: str  # "categorical" | "integer" | "real"
    values: tuple = ()
    lo: float = 0.0
    hi: float = 1.0
    log: bool = False

    def __post_init__(self):
        if self.kind == "categorical":
            if len(self.values) < 2:
                raise ValueError(f"{self.name}: categorical domain needs >= 2 values")
        elif self.kind in ("integer", "real"):
            if not self.lo < self.hi:
                raise ValueError(f"{self.name}: need lo < hi, got {self.lo}, {self.hi}")
            if self.log and self.lo <= 0:
                raise ValueError(f"{self.name}: log scale needs lo > 0")
        else:
            raise ValueError(f"{self.name}: unknown domain kind {self.kind!r}")

    @classmethod
    def categorical(cls, name, values):
        return cls(name, "categorical", values=tuple(values))

    @classmethod
    def integer(cls, name, lo, hi, log=False):
        return cls(name, "integer", lo=int(lo), hi=int(hi), log=log)

    @classmethod
    def real(cls, name, lo, hi, log=False):
        return cls(name, "real", lo=float(lo), hi=float(hi), log=log)

    @property
    def finite(self) -> bool:
        return self.kind != "real"

    @property
    def size(self) -> float:
        if self.kind == "categorical":
            return len(self.values)
        if self.kind == "integer":
            return self.hi - self.lo + 1
        return math.inf

    def enumerate(self) -> list:
        if self.kind == "categorical":
            return list(self.values)
        if self.kind == "integer":
            return list(range(int(self.lo), int(self.hi) + 1))
        raise ValueError(f"{self.name}: real domain is not enumerable")

    def contains(self, v) -> bool:
        if self.kind == "categorical":
            return v in self.values
        if self.kind == "integer":
            return isinstance(v, (int, np.integer)) and self.lo <= v <= self.hi
        return isinstance(v, (float, int)) and self.lo <= v <= self.hi

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            return self.values[int(rng.integers(len(self.values)))]
        if self.kind == "integer":
            if self.log:
                v = math.exp(rng.uniform(math.log(self.lo), math.log(self.hi + 1)))
                return int(min(max(math.floor(v), self.lo), self.hi))
            return int(rng.integers(int(self.lo), int(self.hi) + 1))
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))
        return float(rng.uniform(self.lo, self.hi))

    def resample_different(self, current, rng: np.random.Generator):
        """A value != ``current``; ``current`` itself if the domain allows nothing else."""
        if self.finite:
            others = [v for v in self.enumerate() if v != current]
            if not others:
                return current
            return others[int(rng.integers(len(others)))]
        for _ in range(100):
            v = self.sample(rng)
            if v != current:
                return v
        return current

    def scale(self, v) -> float:
        """Map a value into [0, 1] (log first where declared)."""
        if self.kind == "categorical":
            return self.values.index(v) / (len(self.values) - 1)
        lo, hi, x = float(self.lo), float(self.hi), float(v)
        if self.log:
            lo, hi, x = math.log(lo), math.log(hi), math.log(x)
        return (x - lo) / (hi - lo)

    def to_json(self) -> dict:
        if self.kind == "categorical":
            return {"name": self.name, "kind": "categorical", "values": list(self.values)}
        return {"name": self.name, "kind": self.kind, "lo": self.lo, "hi": self.hi, "log": self.log}

    @classmethod
    def from_json(cls, obj) -> "HyperparamDomain":
        if obj["kind"] == "categorical":
            return cls.categorical(obj["name"], obj["values"])
        return cls(obj["name"], obj["kind"], lo=obj["lo"], hi=obj["hi"], log=obj.get("log", False))


# ------------------------------------------------------------------------- configs


@dataclass(frozen=True)
class PreprocSpec:
    kind: str
    params: dict = field(default_factory=dict, compare=False, hash=False)
    _key: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_key", tuple(sorted(self.params.items())))


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    params: dict = field(default_factory=dict, compare=False, hash=False)
    _key: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_key", tuple(sorted(self.params.items())))

    @property
    def incremental(self) -> bool:
        return self.kind in INCREMENTAL_KINDS


def _canonical(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


@dataclass(frozen=True)
class PipelineConfig:
    """Learner kind, its hyperparameters, and preprocessing genes."""

    learner_kind: str
    learner_params: tuple  # sorted (name, value) pairs
    preproc_genes: tuple = ()  # sorted (name, value) pairs

    @classmethod
    def make(cls, learner_kind: str, learner_params: dict | None = None,
             preproc_genes: dict | None = None) -> "PipelineConfig":
        lp = tuple(sorted((k, _canonical(v)) for k, v in (learner_params or {}).items()))
        pg = tuple(sorted((k, _canonical(v)) for k, v in (preproc_genes or {}).items()))
        return cls(learner_kind, lp, pg)

    @property
    def params(self) -> dict:
        return dict(self.learner_params)

    @property
    def genes(self) -> dict:
        return dict(self.preproc_genes)

    @property
    def learner(self) -> LearnerSpec:
        return LearnerSpec(self.learner_kind, self.params)

    @property
    def preprocessors(self) -> tuple[PreprocSpec, ...]:
        """Ordered preprocessing steps: impute, one-hot, variance filter, standardize."""
        genes = self.genes
        steps = [PreprocSpec("impute_mean")]
        if genes.get("one_hot", False):
            steps.append(PreprocSpec("one_hot"))
        if "variance_threshold" in genes:
            steps.append(PreprocSpec("variance_filter", {"threshold": genes["variance_threshold"]}))
        if genes.get("standardize", False):
            steps.append(PreprocSpec("standardize"))
        return tuple(steps)

    def to_json(self) -> dict:
        return {"learner": self.learner_kind, "params": self.params, "preprocessing": self.genes}

    @classmethod
    def from_json(cls, obj) -> "PipelineConfig":
        return cls.make(obj["learner"], obj.get("params"), obj.get("preprocessing"))

    @cached_property
    def hash(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def describe(self) -> str:
        params = ",".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in self.learner_params)
        return f"{self.learner_kind}({params})"


# -------------------------------------------------------------------------- space


@dataclass(frozen=True)
class SearchSpace:
    learners: tuple  # ((kind, (HyperparamDomain, ...)), ...)
    preprocessors: tuple = ()  # (HyperparamDomain, ...) over preprocessing genes
    restricted_incremental: bool = False

    def __post_init__(self):
        if not self.learners:
            raise ValueError("search space has no learners")
        if self.restricted_incremental:
            bad = [k for k, _ in self.learners if k not in RESTRICTED_KINDS]
            if bad:
                raise ValueError(f"restricted space may not contain {bad}")

    @property
    def kinds(self) -> list[str]:
        return [k for k, _ in self.learners]

    def domains(self, kind: str) -> tuple:
        return dict(self.learners)[kind]

    def genes(self, kind: str) -> list[HyperparamDomain]:
        """Every mutable gene of a config with learner ``kind``."""
        return list(self.domains(kind)) + list(self.preprocessors)

    def contains(self, config: PipelineConfig) -> bool:
        if config.learner_kind not in self.kinds:
            return False
        params, genes = config.params, config.genes
        doms = self.domains(config.learner_kind)
        if set(params) != {d.name for d in doms}:
            return False
        if set(genes) != {d.name for d in self.preprocessors}:
            return False
        return all(d.contains(params[d.name]) for d in doms) and all(
            d.contains(genes[d.name]) for d in self.preprocessors
        )

    @property
    def size(self) -> float:
        pre = math.prod(d.size for d in self.preprocessors)
        return sum(math.prod(d.size for d in doms) for _, doms in self.learners) * pre

    @property
    def finite(self) -> bool:
        return math.isfinite(self.size)

    def enumerate(self) -> list[PipelineConfig]:
        out = []
        pre_names = [d.name for d in self.preprocessors]
        pre_vals = list(itertools.product(*(d.enumerate() for d in self.preprocessors)))
        for kind, doms in self.learners:
            names = [d.name for d in doms]
            for vals in itertools.product(*(d.enumerate() for d in doms)):
                for pv in pre_vals:
                    out.append(PipelineConfig.make(kind, dict(zip(names, vals)),
                                                   dict(zip(pre_names, pv))))
        return out

    @cached_property
    def encoding_layout(self) -> list[tuple[str | None, HyperparamDomain]]:
        layout = [(kind, d) for kind, doms in self.learners for d in doms]
        layout += [(None, d) for d in self.preprocessors]
        return layout

    def to_json(self) -> dict:
        return {
            "learners": {k: [d.to_json() for d in doms] for k, doms in self.learners},
            "preprocessors": [d.to_json() for d in self.preprocessors],
            "restricted_incremental": self.restricted_incremental,
        }

    @classmethod
    def from_json(cls, obj) -> "SearchSpace":
        learners = tuple(
            (k, tuple(HyperparamDomain.from_json(d) for d in doms))
            for k, doms in obj["learners"].items()
        )
        pre = tuple(HyperparamDomain.from_json(d) for d in obj.get("preprocessors", ()))
        return cls(learners, pre, obj.get("restricted_incremental", False))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SearchSpace":
        return cls.from_json(json.loads(Path(path).read_text()))


LEARNER_DOMAINS = {
    "decision_tree": (
        HyperparamDomain.integer("max_depth", 1, 12),
        HyperparamDomain.integer("min_samples_split", 2, 20),
    ),
    "random_forest": (
        HyperparamDomain.integer("n_trees", 10, 200),
        HyperparamDomain.integer("max_depth", 1, 12),
    ),
    "gradient_boosted_trees": (
        HyperparamDomain.integer("n_trees", 10, 200),
        HyperparamDomain.integer("max_depth", 1, 12),
        HyperparamDomain.real("learning_rate", 0.01, 0.5, log=True),
    ),
    "gaussian_naive_bayes": (
        HyperparamDomain.real("var_smoothing", 1e-12, 1e-2, log=True),
        HyperparamDomain.categorical("prior", ("empirical", "uniform")),
    ),
    "logistic_sgd": (
        HyperparamDomain.real("learning_rate", 1e-4, 1e-1, log=True),
        HyperparamDomain.real("alpha", 1e-6, 1e-1, log=True),
        HyperparamDomain.integer("epochs", 1, 20),
    ),
    "knn": (
        HyperparamDomain.integer("k", 1, 25),
        HyperparamDomain.categorical("weights", ("uniform", "distance")),
    ),
}


def default_space(schema=None, restricted_incremental: bool = False) -> SearchSpace:
    kinds = RESTRICTED_KINDS if restricted_incremental else LEARNER_KINDS
    pre = [
        HyperparamDomain.categorical("standardize", (False, True)),
        HyperparamDomain.categorical("variance_threshold", (0.0, 1e-4)),
    ]
    if schema is not None and schema.categorical_columns:
        pre.append(HyperparamDomain.categorical("one_hot", (False, True)))
    return SearchSpace(
        tuple((k, LEARNER_DOMAINS[k]) for k in kinds), tuple(pre), restricted_incremental
    )


def restrict(space: SearchSpace) -> SearchSpace:
    """The same space limited to the incremental tree ensembles."""
    learners = tuple((k, d) for k, d in space.learners if k in RESTRICTED_KINDS)
    if not learners:
        learners = tuple((k, LEARNER_DOMAINS[k]) for k in RESTRICTED_KINDS)
    return SearchSpace(learners, space.preprocessors, True)


# ----------------------------------------------------------------------- operators


def sample_config(space: SearchSpace, seed) -> PipelineConfig:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kind = space.kinds[int(rng.integers(len(space.kinds)))]
    params = {d.name: d.sample(rng) for d in space.domains(kind)}
    genes = {d.name: d.sample(rng) for d in space.preprocessors}
    return PipelineConfig.make(kind, params, genes)


LEARNER_SWAP_PROB = 0.2


def mutate_config(config: PipelineConfig, space: SearchSpace, seed) -> PipelineConfig:
    """Resample one gene (p=0.8) or swap the learner kind (p=0.2).

    The child differs from the parent unless the space offers no other
    value at all (a single-config space), in which case it is returned as is.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kind = config.learner_kind
    others = [k for k in space.kinds if k != kind]
    genes = [d for d in space.genes(kind) if d.size > 1]
    swap = others and (not genes or rng.random() < LEARNER_SWAP_PROB)
    if swap:
        new_kind = others[int(rng.integers(len(others)))]
        params = {d.name: d.sample(rng) for d in space.domains(new_kind)}
        return PipelineConfig.make(new_kind, params, config.genes)
    if not genes:
        return config
    d = genes[int(rng.integers(len(genes)))]
    params, pre = config.params, config.genes
    if d.name in params and d in space.domains(kind):
        params[d.name] = d.resample_different(params[d.name], rng)
    else:
        pre[d.name] = d.resample_different(pre[d.name], rng)
    return PipelineConfig.make(kind, params, pre)


def crossover_configs(a: PipelineConfig, b: PipelineConfig, space: SearchSpace, seed) -> PipelineConfig:
    """Uniform crossover. Learner hyperparameters travel with the learner kind."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if a.learner_kind == b.learner_kind:
        pa, pb = a.params, b.params
        params = {k: (pa[k] if rng.random() < 0.5 else pb[k]) for k in pa}
        kind = a.learner_kind
    else:
        src = a if rng.random() < 0.5 else b
        kind, params = src.learner_kind, src.params
    ga, gb = a.genes, b.genes
    genes = {k: (ga[k] if rng.random() < 0.5 else gb[k]) for k in ga}
    return PipelineConfig.make(kind, params, genes)


def encode_config(config: PipelineConfig, space: SearchSpace) -> np.ndarray:
    """One-hot learner kind, then every hyperparameter scaled to [0, 1]; -1 where inactive."""
    kinds = space.kinds
    head = np.zeros(len(kinds))
    head[kinds.index(config.learner_kind)] = 1.0
    params, genes = config.params, config.genes
    tail = []
    for kind, d in space.encoding_layout:
        if kind is None:
            tail.append(d.scale(genes[d.name]))
        elif kind == config.learner_kind:
            tail.append(d.scale(params[d.name]))
        else:
            tail.append(-1.0)
    return np.concatenate([head, np.asarray(tail, dtype=float)])
