"""Synthetic SEA and rotating-hyperplane streams with injected concept drift.

SEA: three features uniform on [0, 10]; an instance is positive (class 1)
when ``x0 + x1 <= threshold``. Hyperplane: ``d`` features uniform on [0, 1];
positive when ``w . x >= w0``.

Drift moves from one concept to another around a centre ``t_c`` over a
window of ``w`` instances. SEA drift mixes the two labelling functions
probabilistically; hyperplane drift interpolates the plane itself (and
renormalises it), which is the usual "rotation" picture.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .stream import StreamSchema, Stream

SEA_THRESHOLDS = (8.0, 9.0, 7.0, 9.5)
HYPERPLANE_DIM = 10


@dataclass(frozen=True)
class SeaConcept:
    threshold: float

    def __post_init__(self):
        if not 0 < self.threshold < 20:
            raise ValueError(f"SEA threshold must lie in (0, 20), got {self.threshold}")


@dataclass(frozen=True)
class HyperplaneConcept:
    weights: tuple[float, ...]
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not any(self.weights):
            raise ValueError("hyperplane weights are all zero")

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)


Concept = Union[SeaConcept, HyperplaneConcept]

DRIFT_KINDS = ("none", "abrupt", "gradual", "mixed")


@dataclass(frozen=True)
class DriftSpec:
    kind: str = "none"
    center: int = 0
    window: int = 1
    from_concept: Concept | None = None
    to_concept: Concept | None = None
    magnitude_level: int = 1
    components: tuple["DriftSpec", ...] = ()

    def violations(self, n: int | None = None) -> list[str]:
        out = []
        if self.kind not in DRIFT_KINDS:
            return [f"kind must be one of {DRIFT_KINDS}, got {self.kind!r}"]
        if not 1 <= self.magnitude_level <= 4:
            out.append(f"magnitude_level must be in 1..4, got {self.magnitude_level}")
        if self.kind == "mixed":
            kinds = [c.kind for c in self.components]
            if kinds.count("abrupt") != 1:
                out.append("mixed drift needs exactly one abrupt component")
            if kinds.count("gradual") < 1:
                out.append("mixed drift needs at least one gradual component")
            if any(k not in ("abrupt", "gradual") for k in kinds):
                out.append("mixed drift components must be abrupt or gradual")
            for c in self.components:
                out.extend(c.violations(n))
            spans = sorted(c.interval for c in self.components)
            for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
                if b0 < a1:
                    out.append(f"mixed drift components overlap: {a0}-{a1} and {b0}-{b1}")
            chain = sorted(self.components, key=lambda c: c.center)
            for a, b in zip(chain, chain[1:]):
                if a.to_concept != b.from_concept:
                    out.append("mixed drift components do not chain concepts")
            return out
        if self.from_concept is None:
            out.append("from_concept is required")
        if self.kind == "none":
            return out
        if self.to_concept is None:
            out.append("to_concept is required")
        elif self.from_concept is not None and type(self.from_concept) is not type(self.to_concept):
            out.append("from_concept and to_concept belong to different families")
        if self.kind == "abrupt" and self.window != 1:
            out.append(f"abrupt drift needs window 1, got {self.window}")
        if self.kind == "gradual" and self.window < 2:
            out.append(f"gradual drift needs window >= 2, got {self.window}")
        lo, hi = self.interval
        if lo < 0:
            out.append(f"drift interval starts before the stream ({lo} < 0)")
        if n is not None and hi > n:
            out.append(f"drift interval ends after the stream ({hi} > {n})")
        return out

    @property
    def interval(self) -> tuple[float, float]:
        if self.kind == "abrupt":
            return (self.center, self.center)
        if self.kind == "gradual":
            return (self.center - self.window / 2, self.center + self.window / 2)
        if self.kind == "mixed":
            spans = [c.interval for c in self.components]
            return (min(s[0] for s in spans), max(s[1] for s in spans))
        return (0, 0)

    @property
    def initial_concept(self) -> Concept:
        if self.kind == "mixed":
            return min(self.components, key=lambda c: c.center).from_concept
        return self.from_concept

    @property
    def drift_positions(self) -> list[int]:
        if self.kind == "none":
            return []
        if self.kind == "mixed":
            return sorted(int(c.center) for c in self.components)
        return [int(self.center)]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "center": self.center,
            "window": self.window,
            "from_concept": _concept_json(self.from_concept),
            "to_concept": _concept_json(self.to_concept),
            "magnitude_level": self.magnitude_level,
            "components": [c.to_json() for c in self.components],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DriftSpec":
        return cls(
            kind=obj["kind"],
            center=obj["center"],
            window=obj["window"],
            from_concept=_concept_from_json(obj.get("from_concept")),
            to_concept=_concept_from_json(obj.get("to_concept")),
            magnitude_level=obj.get("magnitude_level", 1),
            components=tuple(cls.from_json(c) for c in obj.get("components", ())),
        )


def _concept_json(c):
    if c is None:
        return None
    if isinstance(c, SeaConcept):
        return {"family": "sea", "threshold": c.threshold}
    return {"family": "hyperplane", "weights": list(c.weights), "offset": c.offset}


def _concept_from_json(obj):
    if obj is None:
        return None
    if obj["family"] == "sea":
        return SeaConcept(obj["threshold"])
    return HyperplaneConcept(tuple(obj["weights"]), obj["offset"])


@dataclass(frozen=True)
class NoiseSpec:
    label_flip_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.label_flip_rate <= 1.0:
            raise ValueError(f"label_flip_rate must be in [0, 1], got {self.label_flip_rate}")


# --------------------------------------------------------------------- labelling


def sea_label(x, concept: SeaConcept):
    """1 where ``x0 + x1 <= threshold``; works on one row or a matrix."""
    x = np.asarray(x, dtype=float)
    s = x[..., 0] + x[..., 1]
    out = (s <= concept.threshold).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def hyperplane_label(x, concept: HyperplaneConcept):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(concept.weights):
        raise ValueError(
            f"dimension mismatch: x has {x.shape[-1]} features, "
            f"concept has {len(concept.weights)} weights"
        )
    out = (x @ concept.w >= concept.offset).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def label(x, concept: Concept):
    if isinstance(concept, SeaConcept):
        return sea_label(x, concept)
    return hyperplane_label(x, concept)


def family_of(concept: Concept) -> str:
    return "sea" if isinstance(concept, SeaConcept) else "hyperplane"


def sample_features(family: str, n: int, rng: np.random.Generator, dim: int = HYPERPLANE_DIM):
    if family == "sea":
        return rng.uniform(0.0, 10.0, size=(n, 3))
    if family == "hyperplane":
        return rng.uniform(0.0, 1.0, size=(n, dim))
    raise ValueError(f"unknown family {family!r}")


# ------------------------------------------------------------------ drift schedule


def concept_mix_weight(t, spec: DriftSpec):
    """Probability that instance ``t`` is drawn from the new concept.

    Accepts a scalar or an array of positions. For mixed specs the weight
    refers to whichever component is active at ``t`` (see ``active_component``).
    """
    t = np.asarray(t, dtype=float)
    if spec.kind == "none":
        w = np.zeros_like(t)
    elif spec.kind == "abrupt":
        w = (t >= spec.center).astype(float)
    elif spec.kind == "gradual":
        lo = spec.center - spec.window / 2
        w = np.clip((t - lo) / spec.window, 0.0, 1.0)
    else:
        comp = active_component(t, spec)
        w = np.zeros_like(t)
        for k, c in enumerate(_ordered(spec)):
            sel = comp == k
            w[sel] = concept_mix_weight(t[sel], c)
    return float(w) if w.ndim == 0 else w


def _ordered(spec: DriftSpec) -> list[DriftSpec]:
    return sorted(spec.components, key=lambda c: c.center)


def active_component(t, spec: DriftSpec) -> np.ndarray:
    """Index (in centre order) of the last component whose interval has begun at ``t``."""
    t = np.asarray(t, dtype=float)
    comps = _ordered(spec)
    idx = np.zeros(t.shape, dtype=np.int64)
    for k, c in enumerate(comps[1:], start=1):
        idx[t >= c.interval[0]] = k
    return idx


def _segments(spec: DriftSpec) -> list[DriftSpec]:
    return _ordered(spec) if spec.kind == "mixed" else [spec]


def _interpolate_plane(a: HyperplaneConcept, b: HyperplaneConcept, m: np.ndarray):
    w = (1 - m)[:, None] * a.w + m[:, None] * b.w
    w0 = (1 - m) * a.offset + m * b.offset
    norm = np.linalg.norm(w, axis=1)
    if np.any(norm < 1e-12):
        raise ValueError("hyperplane interpolation passes through the zero vector")
    return w / norm[:, None], w0 / norm


def generate_stream(
    family: str,
    n: int,
    spec: DriftSpec,
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
) -> tuple[StreamSchema, Stream, list[int]]:
    """Draw ``n`` labelled instances; returns (schema, stream, true drift positions)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    problems = spec.violations(n)
    if spec.kind != "mixed" and spec.from_concept is not None and family_of(spec.from_concept) != family:
        problems.append(f"concepts are not from the {family!r} family")
    if problems:
        raise ValueError("invalid drift spec: " + "; ".join(problems))

    rng = np.random.default_rng(seed)
    first = spec.initial_concept
    dim = 3 if family == "sea" else len(first.weights)
    X = sample_features(family, n, rng, dim)
    mix_u = rng.random(n)
    flip_u = rng.random(n)
    t = np.arange(n)

    y = np.empty(n, dtype=np.int64)
    if spec.kind == "none":
        y[:] = label(X, first)
    else:
        comp = active_component(t, spec) if spec.kind == "mixed" else np.zeros(n, dtype=np.int64)
        for k, seg in enumerate(_segments(spec)):
            rows = np.flatnonzero(comp == k)
            if rows.size == 0:
                continue
            m = concept_mix_weight(rows, seg)
            if family == "sea":
                new = mix_u[rows] < m
                y[rows] = np.where(
                    new, label(X[rows], seg.to_concept), label(X[rows], seg.from_concept)
                )
            else:
                w, w0 = _interpolate_plane(seg.from_concept, seg.to_concept, np.atleast_1d(m))
                y[rows] = (np.einsum("ij,ij->i", X[rows], w) >= w0).astype(np.int64)

    flips = flip_u < noise.label_flip_rate
    y[flips] = 1 - y[flips]
    schema = StreamSchema(n_features=dim, n_classes=2)
    return schema, Stream(schema, X, y), spec.drift_positions


# --------------------------------------------------------------------- magnitude


def concept_distance(a: Concept, b: Concept, n_samples: int = 100_000, seed: int = 0) -> float:
    """Monte-Carlo estimate of P(label_a(x) != label_b(x)) under the feature law."""
    if type(a) is not type(b):
        raise ValueError("concepts belong to different families")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    family = family_of(a)
    dim = 3 if family == "sea" else len(a.weights)
    if family == "hyperplane" and len(b.weights) != dim:
        raise ValueError("hyperplanes differ in dimension")
    X = sample_features(family, n_samples, np.random.default_rng(seed), dim)
    return float(np.mean(label(X, a) != label(X, b)))


def sea_pair_ladder(n_samples: int = 200_000, seed: int = 0) -> list[tuple[SeaConcept, SeaConcept, float]]:
    """Four SEA function pairs of increasing concept distance.

    All six pairs of the classic thresholds are ranked by measured distance
    and levels 1..4 take ranks spread evenly from the smallest to the largest.
    Within a pair the lower threshold comes first.
    """
    pairs = []
    for ta, tb in itertools.combinations(SEA_THRESHOLDS, 2):
        a, b = SeaConcept(min(ta, tb)), SeaConcept(max(ta, tb))
        pairs.append((a, b, concept_distance(a, b, n_samples, seed)))
    pairs.sort(key=lambda p: p[2])
    picks = np.round(np.linspace(0, len(pairs) - 1, 4)).astype(int)
    return [pairs[i] for i in picks]


HYPERPLANE_ANGLES = (20.0, 45.0, 90.0, 150.0)
"""Rotation (degrees) between from- and to-plane for magnitude levels 1..4."""


def base_hyperplane(dim: int = HYPERPLANE_DIM) -> HyperplaneConcept:
    w = np.ones(dim)
    return HyperplaneConcept(tuple(w), float(w.sum() / 2))


def rotated_hyperplane(angle_deg: float, dim: int = HYPERPLANE_DIM) -> HyperplaneConcept:
    """Rotate the base plane about the cube centre by ``angle_deg``."""
    u = np.ones(dim) / math.sqrt(dim)
    v = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(dim)])
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    phi = math.radians(angle_deg)
    w = math.cos(phi) * u + math.sin(phi) * v
    return HyperplaneConcept(tuple(w), float(w @ np.full(dim, 0.5)))


def hyperplane_ladder(dim: int = HYPERPLANE_DIM) -> list[tuple[HyperplaneConcept, HyperplaneConcept]]:
    base = rotated_hyperplane(0.0, dim)
    return [(base, rotated_hyperplane(a, dim)) for a in HYPERPLANE_ANGLES]


def abrupt_spec(family: str, level: int, center: int) -> DriftSpec:
    a, b = _ladder_pair(family, level)
    return DriftSpec("abrupt", center, 1, a, b, level)


def gradual_spec(family: str, level: int, center: int, window: int) -> DriftSpec:
    a, b = _ladder_pair(family, level)
    return DriftSpec("gradual", center, window, a, b, level)


def mixed_spec(family: str, level: int, n: int, window: int | None = None) -> DriftSpec:
    """Gradual drift, abrupt drift at mid-stream, gradual drift again.

    The default window is a fifth of the stream (the 100k-of-500k proportion).
    For SEA the abrupt jump is the ladder pair of the requested level and the
    two gradual drifts lead in from, and out to, the two remaining thresholds.
    """
    window = window or n // 5
    c1, c2, c3 = n // 5, n // 2, 4 * n // 5
    if family == "sea":
        a, b = _ladder_pair("sea", level)
        others = [t for t in SEA_THRESHOLDS if t not in (a.threshold, b.threshold)]
        start, end = SeaConcept(others[0]), SeaConcept(others[1])
    else:
        a, b = _ladder_pair("hyperplane", level)
        start = rotated_hyperplane(-HYPERPLANE_ANGLES[level - 1] / 2)
        end = rotated_hyperplane(HYPERPLANE_ANGLES[level - 1] * 1.5)
    comps = (
        DriftSpec("gradual", c1, window, start, a, level),
        DriftSpec("abrupt", c2, 1, a, b, level),
        DriftSpec("gradual", c3, window, b, end, level),
    )
    return DriftSpec("mixed", c2, 1, magnitude_level=level, components=comps)


def no_drift_spec(family: str) -> DriftSpec:
    if family == "sea":
        return DriftSpec("none", from_concept=SeaConcept(SEA_THRESHOLDS[0]))
    return DriftSpec("none", from_concept=base_hyperplane())


def _ladder_pair(family: str, level: int):
    if not 1 <= level <= 4:
        raise ValueError(f"magnitude level must be in 1..4, got {level}")
    if family == "sea":
        a, b, _ = _sea_ladder_cached()[level - 1]
        return a, b
    if family == "hyperplane":
        return hyperplane_ladder()[level - 1]
    raise ValueError(f"unknown family {family!r}")


_SEA_LADDER: list | None = None


def _sea_ladder_cached():
    global _SEA_LADDER
    if _SEA_LADDER is None:
        _SEA_LADDER = sea_pair_ladder()
    return _SEA_LADDER


def make_spec(family: str, drift: str, n: int, level: int = 4,
              center: int | None = None, window: int | None = None) -> DriftSpec:
    """Convenience constructor used by the CLI and experiment harness."""
    center = n // 2 if center is None else center
    if drift == "none":
        return no_drift_spec(family)
    if drift == "abrupt":
        return abrupt_spec(family, level, center)
    if drift == "gradual":
        return gradual_spec(family, level, center, window or n // 5)
    if drift == "mixed":
        return mixed_spec(family, level, n, window)
    raise ValueError(f"unknown drift kind {drift!r}")
