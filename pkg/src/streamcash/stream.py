"""Instances, batches, streams and the sliding-window forgetting mechanism.

Streams are stored column-wise as numpy arrays; ``Instance`` exists for
iteration and for code that wants to look at a single row.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

UNKNOWN_CODE = -1
"""Code given to a categorical value that was not seen when the schema was frozen."""


class Instance(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class FeatureKind:
    """Either numeric (``cardinality is None``) or categorical with a fixed cardinality."""

    cardinality: int | None = None

    @property
    def categorical(self) -> bool:
        return self.cardinality is not None

    def to_json(self):
        return "numeric" if self.cardinality is None else {"categorical": self.cardinality}

    @classmethod
    def from_json(cls, obj) -> "FeatureKind":
        if obj == "numeric":
            return cls()
        return cls(int(obj["categorical"]))


NUMERIC = FeatureKind()


@dataclass(frozen=True)
class StreamSchema:
    n_features: int
    n_classes: int
    feature_kinds: tuple[FeatureKind, ...] = ()
    feature_names: tuple[str, ...] = ()
    # categories[i] lists the raw values of categorical column i in code order
    categories: tuple[tuple[str, ...] | None, ...] = ()
    label_values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_features < 1:
            raise ValueError("schema needs at least one feature")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if not self.feature_kinds:
            object.__setattr__(self, "feature_kinds", (NUMERIC,) * self.n_features)
        if len(self.feature_kinds) != self.n_features:
            raise ValueError("feature_kinds length does not match n_features")
        for i, kind in enumerate(self.feature_kinds):
            if kind.categorical and kind.cardinality < 2:
                raise ValueError(f"categorical feature {i} has cardinality < 2")
        if not self.feature_names:
            object.__setattr__(
                self, "feature_names", tuple(f"x{i}" for i in range(self.n_features))
            )
        if not self.categories:
            object.__setattr__(self, "categories", (None,) * self.n_features)
        if not self.label_values:
            object.__setattr__(self, "label_values", tuple(str(k) for k in range(self.n_classes)))
        if len(self.label_values) != self.n_classes:
            raise ValueError("label_values length does not match n_classes")

    @property
    def categorical_columns(self) -> list[int]:
        return [i for i, k in enumerate(self.feature_kinds) if k.categorical]

    def check(self, X: np.ndarray, y: np.ndarray | None = None) -> None:
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got array of shape {X.shape}"
            )
        if y is not None:
            if len(y) != len(X):
                raise ValueError("features and labels differ in length")
            if len(y) and (y.min() < 0 or y.max() >= self.n_classes):
                raise ValueError(f"label outside [0, {self.n_classes})")

    def to_json(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "feature_kinds": [k.to_json() for k in self.feature_kinds],
            "feature_names": list(self.feature_names),
            "categories": [list(c) if c is not None else None for c in self.categories],
            "label_values": list(self.label_values),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StreamSchema":
        return cls(
            n_features=obj["n_features"],
            n_classes=obj["n_classes"],
            feature_kinds=tuple(FeatureKind.from_json(k) for k in obj["feature_kinds"]),
            feature_names=tuple(obj.get("feature_names", ())),
            categories=tuple(
                tuple(c) if c is not None else None for c in obj.get("categories", ())
            ),
            label_values=tuple(obj.get("label_values", ())),
        )


@dataclass(frozen=True)
class Stream:
    """A finite, ordered stream: row ``i`` of ``X``/``y`` is instance ``i``."""

    schema: StreamSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.schema.check(self.X, self.y)

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self) -> Iterator[Instance]:
        for row, label in zip(self.X, self.y):
            yield Instance(row, int(label))


@dataclass(frozen=True)
class Batch:
    index: int
    X: np.ndarray
    y: np.ndarray
    start: int  # global position of the first instance

    def __len__(self) -> int:
        return len(self.y)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self.y))


@dataclass(frozen=True)
class TrainingView:
    """Rows handed to a learner, with the global instance ids they came from."""

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    schema: StreamSchema

    def __len__(self) -> int:
        return len(self.y)

    def take(self, rows) -> "TrainingView":
        return TrainingView(self.X[rows], self.y[rows], self.ids[rows], self.schema)

    @classmethod
    def from_batches(cls, batches: Sequence[Batch], schema: StreamSchema) -> "TrainingView":
        if not batches:
            return cls(
                np.empty((0, schema.n_features)), np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.int64), schema,
            )
        return cls(
            np.concatenate([b.X for b in batches]),
            np.concatenate([b.y for b in batches]),
            np.concatenate([b.ids for b in batches]),
            schema,
        )


def batchify(stream: Stream, batch_size: int) -> list[Batch]:
    """Cut a stream into consecutive batches of ``batch_size``.

    A trailing partial batch is kept only if it holds at least half a batch.
    """
    n = len(stream)
    if n == 0:
        raise ValueError("empty stream")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if n < batch_size:
        raise ValueError(f"stream of {n} instances is shorter than batch_size {batch_size}")
    batches = []
    for index, start in enumerate(range(0, n, batch_size)):
        stop = min(start + batch_size, n)
        if 2 * (stop - start) < batch_size:
            break
        batches.append(Batch(index, stream.X[start:stop], stream.y[start:stop], start))
    return batches


@dataclass
class SlidingWindow:
    capacity_batches: int = 3
    contents: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.capacity_batches < 1:
            raise ValueError("window capacity must be >= 1")

    def push(self, batch: Batch) -> "SlidingWindow":
        if self.contents and batch.index <= self.contents[-1].index:
            raise ValueError(
                f"non-monotonic batch index: {batch.index} after {self.contents[-1].index}"
            )
        self.contents.append(batch)
        while len(self.contents) > self.capacity_batches:
            self.contents.popleft()
        return self

    @property
    def indices(self) -> list[int]:
        return [b.index for b in self.contents]

    def __len__(self) -> int:
        return sum(len(b) for b in self.contents)

    def training_view(self, schema: StreamSchema) -> TrainingView:
        return TrainingView.from_batches(list(self.contents), schema)


def window_push(window: SlidingWindow, batch: Batch) -> SlidingWindow:
    return window.push(batch)


# --------------------------------------------------------------------------- CSV


def _parse_float(text: str) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "?", "null"):
        return np.nan
    return float(text)


def ingest_csv(path, schema_hints: dict | None = None) -> tuple[StreamSchema, Stream]:
    """Read a CSV with a header row into a schema and a stream, in file order.

    ``schema_hints`` keys (all optional):

    ``label``
        label column name; default is the last column.
    ``categorical``
        column names forced to be categorical. Columns whose values do not
        all parse as numbers are categorical regardless.
    ``schema``
        a previously frozen ``StreamSchema``; category codes and label values
        are reused, unseen categories become ``UNKNOWN_CODE`` and unseen
        labels raise.
    """
    hints = dict(schema_hints or {})
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: missing header row") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}"
                )
            rows.append(row)
    if not rows:
        raise ValueError("empty stream")

    label_col = hints.get("label") or header[-1]
    if label_col not in header:
        raise ValueError(f"label column {label_col!r} not in header")
    li = header.index(label_col)
    feature_cols = [i for i in range(len(header)) if i != li]
    fixed: StreamSchema | None = hints.get("schema")
    forced_cat = set(hints.get("categorical", ()))

    columns = list(zip(*rows))
    X = np.empty((len(rows), len(feature_cols)), dtype=float)
    kinds, cats = [], []
    for j, ci in enumerate(feature_cols):
        raw = columns[ci]
        if fixed is not None:
            is_cat = fixed.feature_kinds[j].categorical
        else:
            is_cat = header[ci] in forced_cat or not _all_numeric(raw)
        if is_cat:
            if fixed is not None:
                values = list(fixed.categories[j])
                code = {v: k for k, v in enumerate(values)}
                X[:, j] = [code.get(v, UNKNOWN_CODE) for v in raw]
            else:
                code = {}
                for v in raw:
                    code.setdefault(v, len(code))
                values = list(code)
                X[:, j] = [code[v] for v in raw]
            kinds.append(FeatureKind(max(len(values), 2)))
            cats.append(tuple(values))
        else:
            X[:, j] = [_parse_float(v) for v in raw]
            kinds.append(NUMERIC)
            cats.append(None)

    raw_labels = columns[li]
    if fixed is not None:
        label_values = list(fixed.label_values)
        lookup = {v: k for k, v in enumerate(label_values)}
        y = np.empty(len(rows), dtype=np.int64)
        for r, v in enumerate(raw_labels):
            if v not in lookup:
                raise ValueError(f"{path}: unknown label value {v!r} at row {r + 2}")
            y[r] = lookup[v]
    elif all(v.strip().isdigit() for v in raw_labels):
        ints = [int(v) for v in raw_labels]
        n_classes = max(max(ints) + 1, 2)
        label_values = [str(k) for k in range(n_classes)]
        y = np.asarray(ints, dtype=np.int64)
    else:
        lookup = {}
        for v in raw_labels:
            lookup.setdefault(v, len(lookup))
        label_values = list(lookup)
        y = np.asarray([lookup[v] for v in raw_labels], dtype=np.int64)

    schema = fixed or StreamSchema(
        n_features=len(feature_cols),
        n_classes=max(len(label_values), 2),
        feature_kinds=tuple(kinds),
        feature_names=tuple(header[i] for i in feature_cols),
        categories=tuple(cats),
        label_values=tuple(label_values),
    )
    return schema, Stream(schema, X, y)


def _all_numeric(values) -> bool:
    try:
        for v in values:
            _parse_float(v)
    except ValueError:
        return False
    return True


def write_csv(stream: Stream, path, label_name: str = "class") -> None:
    """Write a stream so that ``ingest_csv`` reproduces its floats exactly."""
    schema = stream.schema
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(schema.feature_names) + [label_name])
        for row, label in zip(stream.X.tolist(), stream.y.tolist()):
            writer.writerow([repr(v) for v in row] + [schema.label_values[label]])


def write_sidecar(path, **meta) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_sidecar(path) -> dict:
    return json.loads(Path(path).read_text())


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + ".meta.json")
