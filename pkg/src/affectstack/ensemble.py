"""Per-featurizer model selection and stacking.

For every feature set the model zoo is grid-searched with k-fold
cross-validation (Pearson score), the two best configurations are refit on
all training data, and a meta-model is trained on their out-of-fold
predictions: an all-threshold ordinal model for ordinal tasks, ridge
regression for regression tasks.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed

from .featurize import FeatureMatrix, FeaturizeError, featurize_dataset
from .metrics import UndefinedMetricError, pearson
from .models import (
    CLASSIFICATION,
    GRADIENT_BOOSTED,
    ORDINAL,
    RANDOM_FOREST,
    REGRESSION,
    RIDGE,
    HyperParams,
    OrdinalThresholdModel,
    RidgeModel,
    forest_fit,
    gbt_fit,
    ordinal_fit,
    ridge_fit,
)
from .models.io import canonical_json, model_from_dict, model_to_dict
from .tasks import ORDINAL as ORDINAL_TASK
from .tasks import REGRESSION as REGRESSION_TASK
from .tasks import TaskSpec

log = logging.getLogger(__name__)

N_FOLDS = 7
MEMBERS_PER_FEATURIZER = 2
META_LAMBDAS = (0.01, 0.1, 1.0, 10.0)
BUNDLE_FORMAT = "affectstack.ensemble"
BUNDLE_VERSION = 1


class EnsembleError(ValueError):
    pass


def derive_seed(seed: int, *names) -> int:
    """Deterministic 32-bit seed for a named pipeline stage."""
    key = ":".join([str(int(seed))] + [str(n) for n in names]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")


# -- folds -------------------------------------------------------------------


def kfold_split(n: int, k: int = N_FOLDS, seed: int = 0) -> np.ndarray:
    """Fold index for each of ``n`` samples.

    A seeded permutation is cut into ``k`` contiguous chunks whose sizes
    differ by at most one (the first ``n % k`` folds get the extra sample).
    """
    if k < 2:
        raise EnsembleError("need at least 2 folds")
    if n < k:
        raise EnsembleError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.repeat(np.arange(k), sizes)
    return folds


def iter_folds(folds: np.ndarray):
    for f in range(int(folds.max()) + 1):
        yield np.flatnonzero(folds != f), np.flatnonzero(folds == f)


# -- base models -------------------------------------------------------------


def default_grid(task: TaskSpec) -> List[HyperParams]:
    grid = [
        HyperParams(RANDOM_FOREST, n_trees=t, max_depth=dep, feature_fraction=ff)
        for t in (100, 300)
        for dep in (6, None)
        for ff in (0.3, 1.0)
    ]
    grid += [
        HyperParams(GRADIENT_BOOSTED, n_trees=t, max_depth=dep, learning_rate=lr)
        for t in (100, 300)
        for dep in (3, 5)
        for lr in (0.05, 0.1)
    ]
    if task.kind == REGRESSION_TASK:
        grid += [HyperParams(RIDGE, lam=lam) for lam in (0.01, 0.1, 1.0, 10.0)]
    else:
        grid += [
            HyperParams(ORDINAL, lam=lam, loss_kind=lk)
            for lam in (0.1, 1.0, 10.0)
            for lk in ("logistic", "squared")
        ]
    return grid


def targets(gold, task: TaskSpec) -> np.ndarray:
    """Training targets: reals for regression, 0-based classes for ordinal."""
    if task.kind == ORDINAL_TASK:
        return task.to_internal(gold)
    return np.asarray(gold, dtype=np.float64)


def fit_base(params: HyperParams, X, y, task: TaskSpec, seed: int):
    """Fit one zoo member; ``y`` comes from :func:`targets`."""
    ordinal = task.kind == ORDINAL_TASK
    if params.family == RANDOM_FOREST:
        if ordinal:
            return forest_fit(X, y, params, CLASSIFICATION, seed, n_classes=task.n_classes)
        return forest_fit(X, y, params, REGRESSION, seed)
    if params.family == GRADIENT_BOOSTED:
        return gbt_fit(X, y, params, seed)
    if params.family == RIDGE:
        return ridge_fit(X, y, params.lam)
    if params.family == ORDINAL:
        if not ordinal:
            raise EnsembleError("ordinal models only apply to ordinal tasks")
        return ordinal_fit(X, y, task.n_classes, params.loss_kind, params.lam)
    raise EnsembleError(f"unknown family {params.family!r}")


def predict_base(model, X, task: TaskSpec) -> np.ndarray:
    """Member output as reals; ordinal members emit their 0-based class."""
    out = np.asarray(model.predict(X), dtype=np.float64)
    if task.kind == ORDINAL_TASK:
        out = np.clip(np.floor(out + 0.5), 0, task.n_classes - 1)
    return out


@dataclass(frozen=True)
class BaseModel:
    """A retained zoo member, refit on the full training set."""

    featurizer_id: str
    params: HyperParams
    model: object
    cv_score: float
    seed: int

    def predict(self, X, task: TaskSpec) -> np.ndarray:
        return predict_base(self.model, X, task)


# -- cross-validated grid search ---------------------------------------------


@dataclass(frozen=True)
class CvResult:
    featurizer_id: str
    params: HyperParams
    fold_scores: tuple
    mean_score: float
    degenerate_folds: tuple = ()

    @property
    def degenerate(self) -> bool:
        return bool(self.degenerate_folds)


def score_fold(pred, gold):
    """Pearson, or ``(0.0, True)`` when it is undefined."""
    try:
        return pearson(pred, gold), False
    except UndefinedMetricError:
        return 0.0, True


def _model_seed(seed: int, featurizer_id: str, params: HyperParams) -> int:
    return derive_seed(seed, "model", featurizer_id, params.label())


def _cv_one(featurizer_id, params, X, y, task, folds, seed) -> CvResult:
    mseed = _model_seed(seed, featurizer_id, params)
    scores, bad = [], []
    for f, (tr, te) in enumerate(iter_folds(folds)):
        model = fit_base(params, X[tr], y[tr], task, mseed)
        s, degenerate = score_fold(predict_base(model, X[te], task), y[te])
        scores.append(s)
        if degenerate:
            bad.append(f)
    if bad:
        log.warning("%s %s: Pearson undefined on folds %s, scored 0",
                    featurizer_id, params.label(), bad)
    return CvResult(featurizer_id, params, tuple(scores), float(np.mean(scores)), tuple(bad))


def grid_search(
    matrix: FeatureMatrix,
    gold,
    task: TaskSpec,
    grid: Sequence[HyperParams],
    seed: int = 0,
    folds: Optional[np.ndarray] = None,
    n_jobs: int = 1,
) -> List[CvResult]:
    """Cross-validate every grid point; best mean Pearson first.

    Ties keep grid order. ``folds`` defaults to a 7-fold split seeded from
    ``seed``.
    """
    if not grid:
        raise EnsembleError("empty hyper-parameter grid")
    y = targets(gold, task)
    if matrix.values.shape[0] != y.shape[0]:
        raise EnsembleError(
            f"{matrix.featurizer_id}: {matrix.values.shape[0]} rows but {y.shape[0]} gold values"
        )
    if folds is None:
        folds = kfold_split(y.shape[0], N_FOLDS, derive_seed(seed, "folds"))
    X = matrix.values
    results = Parallel(n_jobs=n_jobs)(
        delayed(_cv_one)(matrix.featurizer_id, p, X, y, task, folds, seed) for p in grid
    )
    return sorted(results, key=lambda r: -r.mean_score)


def select_top2(results: Mapping[str, Sequence[CvResult]]) -> List[CvResult]:
    """The two best results per featurizer, featurizers in mapping order."""
    winners = []
    for fid, res in results.items():
        if len(res) < MEMBERS_PER_FEATURIZER:
            raise EnsembleError(
                f"{fid}: need at least {MEMBERS_PER_FEATURIZER} candidates, got {len(res)}"
            )
        ranked = sorted(res, key=lambda r: -r.mean_score)
        winners.extend(ranked[:MEMBERS_PER_FEATURIZER])
    return winners


def refit_members(
    winners: Sequence[CvResult],
    matrices: Mapping[str, FeatureMatrix],
    gold,
    task: TaskSpec,
    seed: int = 0,
    n_jobs: int = 1,
) -> List[BaseModel]:
    y = targets(gold, task)

    def one(w):
        mseed = _model_seed(seed, w.featurizer_id, w.params)
        model = fit_base(w.params, matrices[w.featurizer_id].values, y, task, mseed)
        return BaseModel(w.featurizer_id, w.params, model, w.mean_score, mseed)

    return list(Parallel(n_jobs=n_jobs)(delayed(one)(w) for w in winners))


# -- stacking ----------------------------------------------------------------


def build_meta_features(
    members: Sequence[BaseModel],
    matrices: Mapping[str, FeatureMatrix],
    gold,
    task: TaskSpec,
    folds: np.ndarray,
    n_jobs: int = 1,
) -> np.ndarray:
    """Out-of-fold member predictions, one column per member.

    Entry ``(i, m)`` comes from member ``m``'s configuration retrained on
    every fold except the one holding sample ``i``.
    """
    y = targets(gold, task)

    def column(member):
        X = matrices[member.featurizer_id].values
        col = np.empty(y.shape[0])
        for tr, te in iter_folds(folds):
            model = fit_base(member.params, X[tr], y[tr], task, member.seed)
            col[te] = predict_base(model, X[te], task)
        return col

    cols = Parallel(n_jobs=n_jobs)(delayed(column)(m) for m in members)
    return np.column_stack(cols) if cols else np.empty((y.shape[0], 0))


@dataclass(frozen=True)
class StackFit:
    model: object
    lam: float
    cv_scores: tuple
    degenerate: bool = False


def _constant_meta(y, task: TaskSpec, d: int):
    if task.kind == REGRESSION_TASK:
        return RidgeModel(np.zeros(d), float(np.mean(y)), 0.0)
    K = task.n_classes
    majority = int(np.argmax(np.bincount(y, minlength=K)))
    # zero score exceeds exactly `majority` thresholds
    thresholds = np.where(np.arange(K - 1) < majority, -1.0, 1.0)
    return OrdinalThresholdModel(np.zeros(d), thresholds, K, "squared", 0.0)


def _fit_meta(meta, y, task: TaskSpec, lam: float):
    if task.kind == REGRESSION_TASK:
        return ridge_fit(meta, y, lam)
    return ordinal_fit(meta, y, task.n_classes, "squared", lam)


def fit_stack(
    meta: np.ndarray,
    gold,
    task: TaskSpec,
    folds: Optional[np.ndarray] = None,
    lambdas: Sequence[float] = META_LAMBDAS,
    seed: int = 0,
) -> StackFit:
    """Fit the meta-model, choosing its penalty by k-fold CV Pearson.

    Ordinal tasks get a squared-hinge all-threshold model, regression tasks
    a ridge regressor. Constant meta-features yield a flagged model that
    predicts the mean (regression) or majority class (ordinal).
    """
    meta = np.asarray(meta, dtype=np.float64)
    if not np.all(np.isfinite(meta)):
        raise EnsembleError("meta features must be finite")
    y = targets(gold, task)
    if meta.shape[0] != y.shape[0]:
        raise EnsembleError("meta matrix and gold are not aligned")
    if np.all(meta == meta[:1]):
        log.warning("meta features are constant; stacking is degenerate")
        return StackFit(_constant_meta(y, task, meta.shape[1]), 0.0, (), True)
    if folds is None:
        folds = kfold_split(y.shape[0], N_FOLDS, derive_seed(seed, "folds"))
    scores = []
    for lam in lambdas:
        fold_scores = []
        for tr, te in iter_folds(folds):
            if task.kind == ORDINAL_TASK and np.unique(y[tr]).shape[0] < 2:
                fold_scores.append(0.0)
                continue
            model = _fit_meta(meta[tr], y[tr], task, lam)
            fold_scores.append(score_fold(predict_base(model, meta[te], task), y[te])[0])
        scores.append(float(np.mean(fold_scores)))
    best = int(np.argmax(scores))
    return StackFit(_fit_meta(meta, y, task, lambdas[best]), float(lambdas[best]), tuple(scores))


# -- the ensemble ------------------------------------------------------------


@dataclass
class StackedEnsemble:
    task: TaskSpec
    members: List[BaseModel]
    meta: object
    fold_seed: int
    meta_lam: float = 0.0
    n_folds: int = N_FOLDS
    degenerate: bool = False
    inputs: dict = field(default_factory=dict)
    config_fingerprint: str = ""

    @property
    def featurizer_ids(self) -> List[str]:
        out = []
        for m in self.members:
            if m.featurizer_id not in out:
                out.append(m.featurizer_id)
        return out

    def meta_features(self, matrices: Mapping[str, FeatureMatrix]) -> np.ndarray:
        missing = [fid for fid in self.featurizer_ids if fid not in matrices]
        if missing:
            raise EnsembleError(f"no feature data for featurizer(s): {', '.join(missing)}")
        ids = matrices[self.featurizer_ids[0]].ids
        for fid in self.featurizer_ids[1:]:
            if matrices[fid].ids != ids:
                raise EnsembleError(f"{fid}: feature rows are not aligned with the other featurizers")
        return np.column_stack(
            [m.predict(matrices[m.featurizer_id].values, self.task) for m in self.members]
        )

    def predict_matrices(self, matrices: Mapping[str, FeatureMatrix]) -> np.ndarray:
        """Final outputs on the task's own scale."""
        return finalize(self.meta, self.meta_features(matrices), self.task)


def finalize(meta_model, meta_X, task: TaskSpec) -> np.ndarray:
    """Meta-model output clamped to the regression range or mapped back to
    the task's class labels."""
    raw = np.asarray(meta_model.predict(meta_X), dtype=np.float64)
    if task.kind == REGRESSION_TASK:
        return np.clip(raw, task.lo, task.hi)
    return task.to_label(np.clip(np.floor(raw + 0.5), 0, task.n_classes - 1))


def predict(ensemble: StackedEnsemble, tweets, featurizers: Mapping) -> np.ndarray:
    """End-to-end prediction for processed tweets.

    ``featurizers`` maps featurizer id to an object with ``transform`` (a
    lexicon featurizer or an embedding table).
    """
    matrices = {}
    for fid in ensemble.featurizer_ids:
        if fid not in featurizers:
            raise EnsembleError(f"featurizer {fid!r} is not available")
        try:
            matrices[fid] = featurize_dataset(tweets, featurizers[fid])
        except FeaturizeError as exc:
            raise EnsembleError(str(exc)) from exc
    return ensemble.predict_matrices(matrices)


@dataclass
class TrainResult:
    ensemble: StackedEnsemble
    cv_results: Dict[str, List[CvResult]]
    meta_features: np.ndarray
    folds: np.ndarray


def train_ensemble(
    matrices: Mapping[str, FeatureMatrix],
    gold,
    task: TaskSpec,
    grid: Optional[Sequence[HyperParams]] = None,
    seed: int = 0,
    n_folds: int = N_FOLDS,
    n_jobs: int = 1,
) -> TrainResult:
    """Grid search, top-2 selection, out-of-fold stacking, meta fit."""
    if not matrices:
        raise EnsembleError("no featurizers configured")
    grid = list(grid) if grid is not None else default_grid(task)
    gold = np.asarray(gold)
    n = gold.shape[0]
    ids = None
    for fid, fm in matrices.items():
        if fm.values.shape[0] != n:
            raise EnsembleError(f"{fid}: {fm.values.shape[0]} rows but {n} gold values")
        if ids is None:
            ids = fm.ids
        elif fm.ids != ids:
            raise EnsembleError(f"{fid}: rows are not aligned with the other featurizers")
    fold_seed = derive_seed(seed, "folds")
    folds = kfold_split(n, n_folds, fold_seed)
    cv = {}
    for fid, fm in matrices.items():
        cv[fid] = grid_search(fm, gold, task, grid, seed, folds, n_jobs)
        log.info("%s: best %s (%.4f)", fid, cv[fid][0].params.label(), cv[fid][0].mean_score)
    members = refit_members(select_top2(cv), matrices, gold, task, seed, n_jobs)
    meta_X = build_meta_features(members, matrices, gold, task, folds, n_jobs)
    stack = fit_stack(meta_X, gold, task, folds)
    ensemble = StackedEnsemble(
        task=task,
        members=members,
        meta=stack.model,
        fold_seed=fold_seed,
        meta_lam=stack.lam,
        n_folds=n_folds,
        degenerate=stack.degenerate,
    )
    return TrainResult(ensemble, cv, meta_X, folds)


# -- persistence -------------------------------------------------------------


def ensemble_to_dict(ens: StackedEnsemble) -> dict:
    return {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "task": ens.task.to_dict(),
        "fold_seed": ens.fold_seed,
        "n_folds": ens.n_folds,
        "config_fingerprint": ens.config_fingerprint,
        "inputs": ens.inputs,
        "members": [
            {
                "featurizer_id": m.featurizer_id,
                "params": m.params.to_dict(),
                "cv_score": m.cv_score,
                "seed": m.seed,
                "model": model_to_dict(m.model),
            }
            for m in ens.members
        ],
        "meta": {
            "lam": ens.meta_lam,
            "degenerate": ens.degenerate,
            "model": model_to_dict(ens.meta),
        },
    }


def ensemble_from_dict(doc: Mapping) -> StackedEnsemble:
    if not isinstance(doc, Mapping) or doc.get("format") != BUNDLE_FORMAT:
        raise EnsembleError("not an affectstack ensemble bundle")
    if doc.get("version") != BUNDLE_VERSION:
        raise EnsembleError(f"unsupported ensemble bundle version {doc.get('version')!r}")
    try:
        members = [
            BaseModel(
                m["featurizer_id"],
                HyperParams.from_dict(m["params"]),
                model_from_dict(m["model"]),
                float(m["cv_score"]),
                int(m["seed"]),
            )
            for m in doc["members"]
        ]
        return StackedEnsemble(
            task=TaskSpec.from_dict(doc["task"]),
            members=members,
            meta=model_from_dict(doc["meta"]["model"]),
            fold_seed=int(doc["fold_seed"]),
            meta_lam=float(doc["meta"]["lam"]),
            n_folds=int(doc["n_folds"]),
            degenerate=bool(doc["meta"]["degenerate"]),
            inputs=dict(doc.get("inputs", {})),
            config_fingerprint=doc.get("config_fingerprint", ""),
        )
    except (KeyError, TypeError) as exc:
        raise EnsembleError(f"corrupt ensemble bundle: {exc}") from exc


def save_ensemble(ens: StackedEnsemble, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(ensemble_to_dict(ens)))
        fh.write("\n")


def load_ensemble(path: Union[str, os.PathLike]) -> StackedEnsemble:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EnsembleError(f"{path}: corrupt ensemble bundle: {exc}") from exc
    return ensemble_from_dict(doc)
