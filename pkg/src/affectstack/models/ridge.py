from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RidgeModel:
    weights: np.ndarray
    intercept: float
    lam: float

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def predict(self, X) -> np.ndarray:
        return ridge_predict(self, X)


def ridge_objective(X, y, weights, intercept, lam) -> float:
    """``||Xw + b - y||^2 + lam * ||w||^2`` (intercept unpenalized)."""
    r = np.asarray(X, dtype=np.float64) @ weights + intercept - y
    return float(r @ r + lam * (weights @ weights))


def ridge_fit(X, y, lam: float) -> RidgeModel:
    """Closed-form ridge regression on centered data.

    With ``lam == 0`` the minimum-norm least-squares solution is returned, so
    rank-deficient designs are handled. When there are more features than
    samples the dual system (n x n) is solved instead of the primal.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0] or y.shape[0] < 1:
        raise ValueError(f"incompatible shapes X{X.shape} y{y.shape}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    n, d = Xc.shape
    if lam == 0:
        w = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    elif d <= n:
        w = np.linalg.solve(Xc.T @ Xc + lam * np.eye(d), Xc.T @ yc)
    else:
        w = Xc.T @ np.linalg.solve(Xc @ Xc.T + lam * np.eye(n), yc)
    b = float(y_mean - x_mean @ w)
    return RidgeModel(np.ascontiguousarray(w), b, float(lam))


def ridge_predict(model: RidgeModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return X @ model.weights + model.intercept
