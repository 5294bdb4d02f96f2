"""All-threshold ordinal regression.

A linear score ``u = w.x`` is compared against ``K - 1`` ordered thresholds;
the predicted class is the number of thresholds strictly exceeded. Training
minimizes, for every sample and every threshold, a margin penalty on the
signed distance between score and threshold, plus ``lam/2 * ||w||^2``.

Threshold ordering is kept by projection: after every gradient step the
thresholds are replaced by their isotonic (non-decreasing) least-squares
fit, computed with pool-adjacent-violators. The objective stays convex in
``(w, thresholds)`` and the step rule is projected gradient descent with a
backtracking line search.

The solver works on centered features with thresholds shifted by
``w.mean(X)``; this leaves every objective value unchanged (the penalty only
sees ``w``) but removes the near-flat direction along which score offset
and thresholds trade off when the features are far from zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .params import LOSS_KINDS


@dataclass(frozen=True)
class OptConfig:
    max_iter: int = 2000
    tol: float = 1e-6
    backtrack: float = 0.5
    max_backtracks: int = 60


@dataclass(frozen=True)
class OrdinalThresholdModel:
    weights: np.ndarray
    thresholds: np.ndarray
    n_classes: int
    loss_kind: str
    lam: float
    converged: bool = True
    n_iter: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.thresholds.shape != (self.n_classes - 1,):
            raise ValueError("need exactly n_classes - 1 thresholds")
        if np.any(np.diff(self.thresholds) < 0):
            raise ValueError("thresholds must be non-decreasing")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X @ self.weights

    def predict(self, X) -> np.ndarray:
        u = self.decision_function(X)
        return (u[:, None] > self.thresholds[None, :]).sum(axis=1)


def _penalty(z, loss_kind):
    """Margin penalty and its derivative."""
    if loss_kind == "logistic":
        return np.logaddexp(0.0, -z), -0.5 * (1.0 - np.tanh(0.5 * z))
    h = np.maximum(0.0, 1.0 - z)
    return h * h, -2.0 * h


def _signs(y, n_classes):
    # +1 where threshold index j (0-based) is at or above the label: the score
    # should sit below that threshold. -1 otherwise.
    j = np.arange(n_classes - 1)
    return np.where(j[None, :] >= y[:, None], 1.0, -1.0)


def ordinal_objective(weights, thresholds, X, y, n_classes, loss_kind="squared", lam=1.0):
    """Objective value and gradients ``(value, grad_w, grad_thresholds)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    s = _signs(y, n_classes)
    u = X @ weights
    z = s * (thresholds[None, :] - u[:, None])
    f, df = _penalty(z, loss_kind)
    ds = df * s
    value = f.sum() + 0.5 * lam * (weights @ weights)
    grad_theta = ds.sum(axis=0)
    grad_w = -(X.T @ ds.sum(axis=1)) + lam * weights
    return float(value), grad_w, grad_theta


def isotonic(v) -> np.ndarray:
    """Least-squares non-decreasing fit of ``v`` (pool adjacent violators)."""
    v = np.asarray(v, dtype=np.float64)
    if np.all(v[1:] >= v[:-1]):
        return v.copy()
    vals: List[float] = []
    counts: List[int] = []
    for x in v:
        vals.append(float(x))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            c = counts[-2] + counts[-1]
            m = (vals[-2] * counts[-2] + vals[-1] * counts[-1]) / c
            vals[-2:] = [m]
            counts[-2:] = [c]
    return np.repeat(vals, counts)


def _initial_thresholds(y, n_classes):
    # logistic quantiles of the cumulative label distribution: the optimum of
    # a cumulative-logit model when every score is zero
    cum = np.cumsum(np.bincount(y, minlength=n_classes))[:-1] / len(y)
    cum = np.clip(cum, 1e-3, 1 - 1e-3)
    return np.log(cum / (1 - cum))


def ordinal_fit(
    X,
    y,
    n_classes: int,
    loss_kind: str = "squared",
    lam: float = 1.0,
    opt: Optional[OptConfig] = None,
    trace: Optional[list] = None,
) -> OrdinalThresholdModel:
    """Fit an all-threshold model to labels in ``{0, ..., n_classes - 1}``.

    If ``trace`` is a list, the objective value of every accepted iterate is
    appended to it. A run that hits ``max_iter`` returns the best iterate with
    ``converged=False``.
    """
    opt = opt or OptConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes X{X.shape} y{y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.round(y)):
            raise ValueError("ordinal labels must be integers")
        y = y.astype(np.int64)
    if n_classes < 2 or y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    if np.unique(y).shape[0] < 2:
        raise ValueError("at least two distinct labels are required")
    if lam < 0:
        raise ValueError("lam must be non-negative")

    d = X.shape[1]
    mu = X.mean(axis=0)
    Xc = X - mu

    def fg(p):
        val, gw, gt = ordinal_objective(p[:d], p[d:], Xc, y, n_classes, loss_kind, lam)
        return val, np.concatenate([gw, gt])

    def project(p):
        out = p.copy()
        out[d:] = isotonic(p[d:])
        return out

    p = np.concatenate([np.zeros(d), _initial_thresholds(y, n_classes)])
    val, g = fg(p)
    if trace is not None:
        trace.append(val)
    step = 1.0 / max(1.0, float(np.linalg.norm(g)))
    converged = False
    n_iter = 0
    while True:
        if np.linalg.norm(p - project(p - g)) < opt.tol:
            converged = True
            break
        if n_iter >= opt.max_iter:
            break
        t = step
        for _ in range(opt.max_backtracks):
            p_new = project(p - t * g)
            diff = p_new - p
            val_new, g_new = fg(p_new)
            if val_new <= val + g @ diff + (diff @ diff) / (2 * t):
                break
            t *= opt.backtrack
        else:
            break
        if val_new > val:
            break
        # Barzilai-Borwein trial step for the next iteration
        dg = g_new - g
        curv = diff @ dg
        step = (diff @ diff) / curv if curv > 1e-300 else t * 2
        p, val, g = p_new, val_new, g_new
        n_iter += 1
        if trace is not None:
            trace.append(val)
    weights = np.ascontiguousarray(p[:d])
    return OrdinalThresholdModel(
        weights=weights,
        thresholds=np.ascontiguousarray(p[d:] + weights @ mu),
        n_classes=int(n_classes),
        loss_kind=loss_kind,
        lam=float(lam),
        converged=converged,
        n_iter=n_iter,
    )


def ordinal_predict(model: OrdinalThresholdModel, x) -> int:
    """Class of a single feature vector: the number of thresholds exceeded."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("ordinal_predict takes one feature vector; use model.predict for a batch")
    return int(model.predict(x[None, :])[0])
