"""CART trees, bagged forests and squared-error gradient boosting.

Trees are stored as flat node arrays. A sample goes left at a node when
``x[feature] <= threshold``; split thresholds are midpoints between
consecutive distinct feature values. Regression splits maximize variance
reduction and classification splits minimize Gini impurity. Among equally
good splits the lowest feature index wins, then the lowest threshold.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .params import GRADIENT_BOOSTED, RANDOM_FOREST, HyperParams

REGRESSION = "regression"
CLASSIFICATION = "classification"

# number of features scored at once when searching for a split
_FEATURE_BLOCK = 256
# scores this close (relative) count as tied, so the tie rule survives rounding
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # int64, -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs): mean target or class counts

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            idx = rows[active]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _split_on_sorted(xs, ts, total, min_samples_leaf):
    """Best split given per-feature sorted values ``xs`` (f, m) and targets
    ``ts`` (f, m, k). Returns ``(row, threshold, score)`` or ``None``."""
    m = xs.shape[1]
    n_left = np.arange(1, m, dtype=np.float64)
    n_right = m - n_left
    cum = np.cumsum(ts, axis=1)[:, :-1, :]
    right = total - cum
    score = np.einsum("fpk,fpk->fp", cum, cum) / n_left
    score += np.einsum("fpk,fpk->fp", right, right) / n_right
    valid = xs[:, 1:] > xs[:, :-1]
    if min_samples_leaf > 1:
        valid[:, : min_samples_leaf - 1] = False
        valid[:, m - min_samples_leaf :] = False
    score[~valid] = -np.inf
    best = score.max()
    if best == -np.inf:
        return None
    # first near-maximal entry: lowest feature row, then lowest threshold
    flat = int(np.argmax(score >= best - _TIE_RTOL * max(1.0, abs(best))))
    row, pos = divmod(flat, m - 1)
    best = score[row, pos]
    lo, hi = xs[row, pos], xs[row, pos + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return row, float(thr), float(best)


def _better(found, best) -> bool:
    return best is None or found[2] > best[2] + _TIE_RTOL * max(1.0, abs(best[2]))


def _improves(score, total, m):
    parent = float(total @ total) / m
    # a split must strictly reduce impurity, beyond rounding noise
    return score - parent > 1e-12 * max(1.0, abs(parent))


def find_best_split(X, targets, features=None, min_samples_leaf=1):
    """Best ``(feature, threshold, score)`` over ``features`` or ``None``.

    ``targets`` is an ``(n, k)`` array; the score maximized is
    ``sum_k S_left_k**2 / n_left + S_right_k**2 / n_right``, which is the
    variance-reduction criterion for a real target (k = 1) and the Gini
    criterion for one-hot class indicators.
    """
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(X.shape[0], -1)
    n = X.shape[0]
    features = np.arange(X.shape[1]) if features is None else np.asarray(features)
    if n < max(2, 2 * min_samples_leaf) or features.shape[0] == 0:
        return None
    total = targets.sum(axis=0)
    best = None
    for start in range(0, features.shape[0], _FEATURE_BLOCK):
        feats = features[start : start + _FEATURE_BLOCK]
        srt = np.argsort(X[:, feats], axis=0, kind="stable").T
        xs = X[srt, feats[:, None]]
        found = _split_on_sorted(xs, targets[srt], total, min_samples_leaf)
        if found is not None and _better(found, best):
            best = (int(feats[found[0]]), found[1], found[2])
    if best is None or not _improves(best[2], total, n):
        return None
    return best


def build_tree(
    X: np.ndarray,
    targets: np.ndarray,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    counts: bool = False,
) -> Tree:
    """Grow one tree depth-first.

    ``targets`` is ``(n, k)``. Leaves store the column means of the targets
    that reach them, or their column sums when ``counts`` is set (class
    votes for one-hot targets).
    """
    n, d = X.shape
    if max_features is None or max_features >= d:
        max_features = d
    XT = np.ascontiguousarray(X.T)
    order = np.argsort(X, axis=0, kind="stable").T  # (d, n)
    all_feats = np.arange(d)
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[np.ndarray] = []
    in_left = np.zeros(n, dtype=bool)

    def new_node(total, m):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(total if counts else total / m)
        return len(feature) - 1

    total = targets.sum(axis=0)
    stack = [(new_node(total, n), order, total, 0)]
    while stack:
        node, node_order, total, depth = stack.pop()
        m = node_order.shape[1]
        if (max_depth is not None and depth >= max_depth) or m < max(2, 2 * min_samples_leaf):
            continue
        if max_features < d:
            feats = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            feats = all_feats
        best = None
        for start in range(0, feats.shape[0], _FEATURE_BLOCK):
            block = feats[start : start + _FEATURE_BLOCK]
            srt = node_order[block] if max_features < d or d > _FEATURE_BLOCK else node_order
            found = _split_on_sorted(XT[block[:, None], srt], targets[srt], total,
                                     min_samples_leaf)
            if found is not None and _better(found, best):
                best = (int(block[found[0]]), found[1], found[2])
        if best is None or not _improves(best[2], total, m):
            continue
        f, thr, _ = best
        samples = node_order[0]
        go_left = XT[f, samples] <= thr
        in_left[samples] = go_left
        mask = in_left[node_order]
        m_left = int(go_left.sum())
        left_order = node_order[mask].reshape(d, m_left)
        right_order = node_order[~mask].reshape(d, m - m_left)
        in_left[samples] = False
        total_left = targets[samples[go_left]].sum(axis=0)
        total_right = total - total_left
        feature[node] = f
        threshold[node] = thr
        li = new_node(total_left, m_left)
        ri = new_node(total_right, m - m_left)
        left[node], right[node] = li, ri
        stack.append((ri, right_order, total_right, depth + 1))
        stack.append((li, left_order, total_left, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.vstack(value).astype(np.float64),
    )


@dataclass(frozen=True)
class TreeEnsembleModel:
    kind: str
    task: str
    trees: tuple
    n_features: int
    n_classes: int = 0
    learning_rate: float = 1.0
    base_score: float = 0.0
    seed: int = 0
    max_depth: Optional[int] = None

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a tree ensemble needs at least one tree")
        for tree in self.trees:
            if np.any(tree.feature >= self.n_features):
                raise ValueError("tree references a feature index out of range")
            if self.max_depth is not None and tree.depth() > self.max_depth:
                raise ValueError("tree deeper than max_depth")

    def predict(self, X) -> np.ndarray:
        return model_predict(self, X)


def _max_features(params: HyperParams, d: int) -> int:
    return max(1, int(round(params.feature_fraction * d)))


def _labels(y):
    y = np.asarray(y)
    if not np.all(y == np.round(y)) or y.min() < 0:
        raise ValueError("class labels must be non-negative integers")
    return y.astype(np.int64)


def forest_fit(
    X,
    y,
    params: HyperParams,
    task: str = REGRESSION,
    seed: int = 0,
    n_classes: Optional[int] = None,
) -> TreeEnsembleModel:
    """Bagged trees with per-split feature subsampling.

    Each tree is grown on a bootstrap sample; regression leaves hold the mean
    target and classification leaves hold per-class counts.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    if task == CLASSIFICATION:
        labels = _labels(y)
        k = int(n_classes if n_classes is not None else labels.max() + 1)
        targets = np.eye(k)[labels]
    elif task == REGRESSION:
        targets = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        k = 0
    else:
        raise ValueError(f"unknown task {task!r}")
    children = np.random.SeedSequence(seed).spawn(params.n_trees)
    mf = _max_features(params, d)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, size=n)
        trees.append(
            build_tree(X[boot], targets[boot], params.max_depth, params.min_samples_leaf,
                       mf, rng, counts=task == CLASSIFICATION)
        )
    return TreeEnsembleModel(
        kind=RANDOM_FOREST, task=task, trees=tuple(trees), n_features=d, n_classes=k,
        seed=int(seed), max_depth=params.max_depth,
    )


def gbt_fit(X, y, params: HyperParams, seed: int = 0, staged: Optional[list] = None):
    """Stagewise squared-error boosting of regression trees.

    Starts from the mean target; every round fits a tree to the current
    residuals and adds ``learning_rate`` times its output. If ``staged`` is a
    list, training predictions after each round are appended to it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    base = float(y.mean())
    current = np.full(n, base)
    mf = _max_features(params, d)
    trees = []
    for _ in range(params.n_trees):
        tree = build_tree(X, (y - current)[:, None], params.max_depth,
                          params.min_samples_leaf, mf, rng)
        current = current + params.learning_rate * tree.predict_value(X)[:, 0]
        trees.append(tree)
        if staged is not None:
            staged.append(current.copy())
    return TreeEnsembleModel(
        kind=GRADIENT_BOOSTED, task=REGRESSION, trees=tuple(trees), n_features=d,
        learning_rate=float(params.learning_rate), base_score=base, seed=int(seed),
        max_depth=params.max_depth,
    )


def _vote(counts: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum: ties go to the lower class
    return np.argmax(counts, axis=1)


def model_predict(model: TreeEnsembleModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    if model.kind == GRADIENT_BOOSTED:
        total = np.zeros(X.shape[0])
        for tree in model.trees:
            total += tree.predict_value(X)[:, 0]
        return model.base_score + model.learning_rate * total
    if model.task == REGRESSION:
        return np.mean([tree.predict_value(X)[:, 0] for tree in model.trees], axis=0)
    votes = np.zeros((X.shape[0], model.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in model.trees:
        votes[rows, _vote(tree.predict_value(X))] += 1
    return _vote(votes)


def trees_from_arrays(arrays: Sequence[dict]) -> tuple:
    return tuple(Tree(**a) for a in arrays)
