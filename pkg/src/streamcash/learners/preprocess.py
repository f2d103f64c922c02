"""Column transforms. Each keeps running statistics so ``partial_fit`` can update them."""

from __future__ import annotations

import copy

import numpy as np


def _merge_moments(n_a, mean_a, m2_a, X):
    """Chan et al. parallel update of count / mean / sum of squared deviations."""
    n_b = np.sum(~np.isnan(X), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_b = np.where(n_b > 0, np.nansum(X, axis=0) / np.maximum(n_b, 1), 0.0)
        m2_b = np.nansum((X - mean_b) ** 2, axis=0)
    n = n_a + n_b
    delta = mean_b - mean_a
    safe = np.maximum(n, 1)
    mean = mean_a + delta * n_b / safe
    m2 = m2_a + m2_b + delta**2 * n_a * n_b / safe
    return n, mean, m2


class _Moments:
    def _init_moments(self, X):
        d = X.shape[1]
        self.n_, self.mean_, self.m2_ = _merge_moments(np.zeros(d), np.zeros(d), np.zeros(d), X)

    def _update_moments(self, X):
        self.n_, self.mean_, self.m2_ = _merge_moments(self.n_, self.mean_, self.m2_, X)

    @property
    def var_(self):
        return self.m2_ / np.maximum(self.n_, 1)

    def copy(self):
        return copy.deepcopy(self)


class ImputeMean(_Moments):
    kind = "impute_mean"

    def fit(self, X, schema=None):
        self._init_moments(X)
        return self

    def partial_fit(self, X):
        self._update_moments(X)
        return self

    def transform(self, X):
        if not np.isnan(X).any():
            return X
        return np.where(np.isnan(X), self.mean_, X)


class OneHot:
    """Expands categorical columns into indicators; unknown codes give all zeros."""

    kind = "one_hot"

    def fit(self, X, schema=None):
        self.cards_ = {}
        if schema is not None:
            self.cards_ = {
                i: schema.feature_kinds[i].cardinality for i in schema.categorical_columns
            }
        return self

    def partial_fit(self, X):
        return self

    def transform(self, X):
        if not self.cards_:
            return X
        parts = []
        for j in range(X.shape[1]):
            card = self.cards_.get(j)
            if card is None:
                parts.append(X[:, j : j + 1])
            else:
                parts.append((X[:, j : j + 1] == np.arange(card)).astype(float))
        return np.hstack(parts)

    def copy(self):
        return copy.deepcopy(self)


class VarianceFilter(_Moments):
    """Drops columns whose training variance is not above ``threshold``.

    The kept-column mask is fixed at ``fit``; later updates only refresh the
    statistics so downstream learners keep seeing the same width.
    """

    kind = "variance_filter"

    def __init__(self, threshold: float = 0.0):
        self.threshold = threshold

    def fit(self, X, schema=None):
        self._init_moments(X)
        keep = self.var_ > self.threshold
        if not keep.any():
            keep[0] = True
        self.keep_ = keep
        return self

    def partial_fit(self, X):
        self._update_moments(X)
        return self

    def transform(self, X):
        return X[:, self.keep_]


class Standardize(_Moments):
    kind = "standardize"

    def fit(self, X, schema=None):
        self._init_moments(X)
        return self

    def partial_fit(self, X):
        self._update_moments(X)
        return self

    def transform(self, X):
        std = np.sqrt(self.var_)
        std = np.where(std > 0, std, 1.0)
        return (X - self.mean_) / std


def make_step(kind: str, params: dict):
    if kind == "impute_mean":
        return ImputeMean()
    if kind == "one_hot":
        return OneHot()
    if kind == "variance_filter":
        return VarianceFilter(float(params.get("threshold", 0.0)))
    if kind == "standardize":
        return Standardize()
    raise ValueError(f"unknown preprocessor kind {kind!r}")
