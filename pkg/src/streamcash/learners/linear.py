"""Multinomial logistic regression: SGD learner and an L-BFGS fitted GLM."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .base import one_hot

BATCH = 32


def _augment(X):
    return np.hstack([X, np.ones((len(X), 1))])


def softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def loss_and_grad(W, Xa, Y, alpha):
    """Mean cross-entropy plus ``alpha/2 * ||W||^2`` (bias row excluded).

    ``Xa`` already carries the trailing column of ones; ``W`` is (d+1, K).
    """
    Z = Xa @ W
    m = Z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(Z - m).sum(axis=1))
    n = len(Xa)
    reg = W[:-1]
    loss = np.mean(lse - (Z * Y).sum(axis=1)) + 0.5 * alpha * np.sum(reg * reg)
    G = Xa.T @ (softmax(Z) - Y) / n
    G[:-1] += alpha * reg
    return float(loss), G


class LogisticSGD:
    incremental = True

    def __init__(self, learning_rate=0.01, alpha=1e-4, epochs=5):
        self.learning_rate = float(learning_rate)
        self.alpha = float(alpha)
        self.epochs = int(epochs)

    def fit(self, X, y, n_classes, rng):
        self.n_classes = n_classes
        self.coef_ = np.zeros((X.shape[1] + 1, n_classes))
        self.coef_ = self._descend(self.coef_, X, y, rng)
        return self

    def partial_fit(self, X, y, rng, n_new=None):
        out = object.__new__(LogisticSGD)
        out.__dict__.update(self.__dict__)
        out.coef_ = self._descend(self.coef_.copy(), X, y, rng)
        return out

    def _descend(self, W, X, y, rng):
        Xa = _augment(X)
        Y = one_hot(y, self.n_classes)
        n = len(Xa)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, BATCH):
                rows = order[start : start + BATCH]
                _, G = loss_and_grad(W, Xa[rows], Y[rows], self.alpha)
                W -= self.learning_rate * G
        return W

    def predict_proba(self, X):
        return softmax(_augment(X) @ self.coef_)


class GLM:
    """Multinomial logistic regression fitted to convergence (used as a stacker)."""

    incremental = False

    def __init__(self, alpha=1e-3):
        self.alpha = alpha

    def fit(self, X, y, n_classes, rng=None):
        self.n_classes = n_classes
        Xa = _augment(X)
        Y = one_hot(y, n_classes)
        shape = (Xa.shape[1], n_classes)

        def f(w):
            loss, G = loss_and_grad(w.reshape(shape), Xa, Y, self.alpha)
            return loss, G.ravel()

        res = minimize(f, np.zeros(np.prod(shape)), jac=True, method="L-BFGS-B",
                       options={"maxiter": 500})
        self.coef_ = res.x.reshape(shape)
        return self

    def predict_proba(self, X):
        return softmax(_augment(X) @ self.coef_)
