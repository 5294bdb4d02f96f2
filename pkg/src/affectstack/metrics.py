"""Competition metrics: Pearson variants and quadratic weighted kappa."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .tasks import EMOTIONS, ORDINAL, REGRESSION, TaskSpec

__all__ = [
    "UndefinedMetricError",
    "pearson",
    "ma_pearson",
    "pearson_high",
    "se_subset",
    "quadratic_weighted_kappa",
    "EvalReport",
    "GroupReport",
    "evaluate",
    "evaluate_group",
]


class UndefinedMetricError(ValueError):
    pass


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def pearson(a, b) -> float:
    a, b = _pair(a, b)
    if a.shape[0] < 2:
        raise UndefinedMetricError("pearson needs at least 2 points")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedMetricError("pearson is undefined for a constant vector")
    da = a - a.mean()
    db = b - b.mean()
    r = float(da @ db / np.sqrt((da @ da) * (db @ db)))
    return min(1.0, max(-1.0, r))


def ma_pearson(per_emotion: Mapping[str, Tuple]) -> float:
    """Unweighted mean of the per-emotion Pearson correlations."""
    if set(per_emotion) != set(EMOTIONS):
        raise ValueError(f"need exactly the emotions {EMOTIONS}, got {sorted(per_emotion)}")
    values = []
    for emo in EMOTIONS:
        pred, gold = per_emotion[emo]
        try:
            values.append(pearson(pred, gold))
        except UndefinedMetricError as exc:
            raise UndefinedMetricError(f"{emo}: {exc}") from exc
    return float(np.mean(values))


def pearson_high(pred, gold, cutoff: float = 0.5) -> Tuple[float, int]:
    """Pearson over the items whose gold intensity is at least ``cutoff``."""
    pred, gold = _pair(pred, gold)
    keep = gold >= cutoff
    size = int(keep.sum())
    try:
        return pearson(pred[keep], gold[keep]), size
    except UndefinedMetricError as exc:
        raise UndefinedMetricError(f"gold >= {cutoff} subset (size {size}): {exc}") from exc


def se_subset(pred, gold, task: Optional[TaskSpec] = None):
    """Keep the items whose gold class is not the neutral class (label 0)."""
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape:
        raise ValueError("pred and gold must be aligned")
    neutral = task.neutral_label if task is not None else 0
    keep = gold != neutral
    return pred[keep], gold[keep]


def quadratic_weighted_kappa(pred, gold, n_classes: int) -> float:
    """Cohen's kappa with weights ``(i - j)**2 / (K - 1)**2``.

    Classes must already be mapped to ``0..K-1``.
    """
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape or pred.ndim != 1 or pred.shape[0] < 1:
        raise ValueError("need two aligned non-empty class vectors")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if np.any(pred != np.round(pred)) or np.any(gold != np.round(gold)):
        raise ValueError("classes must be integers")
    pred = pred.astype(np.int64)
    gold = gold.astype(np.int64)
    if min(pred.min(), gold.min()) < 0 or max(pred.max(), gold.max()) >= n_classes:
        raise ValueError(f"classes must lie in 0..{n_classes - 1}")
    n = pred.shape[0]
    observed = np.zeros((n_classes, n_classes))
    np.add.at(observed, (gold, pred), 1.0)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n
    idx = np.arange(n_classes)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (n_classes - 1) ** 2
    denom = float((weights * expected).sum())
    num = float((weights * observed).sum())
    if denom == 0.0:
        if num == 0.0:
            return 1.0
        raise UndefinedMetricError("kappa is undefined: zero expected disagreement")
    return 1.0 - num / denom


_REGRESSION_FIELDS = ("pearson", "pearson_high")
_ORDINAL_FIELDS = ("pearson", "kappa", "pearson_se", "kappa_se")


@dataclass
class EvalReport:
    task: TaskSpec
    n: int
    pearson: Optional[float] = None
    ma_pearson: Optional[float] = None
    pearson_high: Optional[float] = None
    kappa: Optional[float] = None
    pearson_se: Optional[float] = None
    kappa_se: Optional[float] = None
    subset_sizes: Dict[str, int] = field(default_factory=dict)
    undefined: Dict[str, str] = field(default_factory=dict)

    @property
    def fields(self) -> tuple:
        return _REGRESSION_FIELDS if self.task.kind == REGRESSION else _ORDINAL_FIELDS

    def has_undefined(self) -> bool:
        return bool(self.undefined)

    def to_text(self) -> str:
        """Stable ``key<TAB>value`` rendering; undefined metrics read
        ``null<TAB>reason``."""
        lines = [
            f"task\t{self.task.name}",
            f"dimension\t{self.task.dimension}",
            f"n\t{self.n}",
        ]
        for name in self.fields:
            value = getattr(self, name)
            if value is None:
                lines.append(f"{name}\tnull\t{self.undefined.get(name, 'not computed')}")
            else:
                lines.append(f"{name}\t{value:.6f}")
        for name in sorted(self.subset_sizes):
            lines.append(f"n_{name}\t{self.subset_sizes[name]}")
        return "\n".join(lines) + "\n"


def _try(report: EvalReport, name: str, fn, *args):
    try:
        value = fn(*args)
    except UndefinedMetricError as exc:
        report.undefined[name] = str(exc)
        return None
    setattr(report, name, value)
    return value


def evaluate(pred, gold, task: TaskSpec) -> EvalReport:
    """Every metric that applies to ``task``.

    For ordinal tasks ``pred`` and ``gold`` are class labels on the task's
    own scale (e.g. -3..3 for valence).
    """
    pred = np.asarray(pred, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.float64)
    if pred.shape != gold.shape:
        raise ValueError("pred and gold must be aligned")
    report = EvalReport(task=task, n=int(pred.shape[0]))
    _try(report, "pearson", pearson, pred, gold)
    if task.kind == REGRESSION:
        keep = gold >= 0.5
        report.subset_sizes["high"] = int(keep.sum())
        _try(report, "pearson_high", lambda: pearson_high(pred, gold)[0])
    else:
        K = task.n_classes
        _try(report, "kappa", quadratic_weighted_kappa,
             task.to_internal(pred), task.to_internal(gold), K)
        p_se, g_se = se_subset(pred, gold, task)
        report.subset_sizes["se"] = int(g_se.shape[0])
        _try(report, "pearson_se", pearson, p_se, g_se)
        if g_se.shape[0] == 0:
            report.undefined["kappa_se"] = "some-emotion subset is empty"
        else:
            _try(report, "kappa_se", quadratic_weighted_kappa,
                 task.to_internal(p_se), task.to_internal(g_se), K)
    return report


@dataclass
class GroupReport:
    """Per-emotion reports plus their macro averages."""

    kind: str
    reports: Dict[str, EvalReport]
    macro: Dict[str, Optional[float]]
    undefined: Dict[str, str] = field(default_factory=dict)

    @property
    def ma_pearson(self) -> Optional[float]:
        return self.macro.get("pearson")

    def to_text(self) -> str:
        lines = [f"task\tEI-{'reg' if self.kind == REGRESSION else 'oc'}"]
        for name, value in self.macro.items():
            key = "ma_" + name
            if value is None:
                lines.append(f"{key}\tnull\t{self.undefined.get(name, 'not computed')}")
            else:
                lines.append(f"{key}\t{value:.6f}")
        for emo in EMOTIONS:
            for line in self.reports[emo].to_text().splitlines()[2:]:
                lines.append(f"{emo}.{line}")
        return "\n".join(lines) + "\n"


def evaluate_group(per_emotion: Mapping[str, Tuple], kind: str) -> GroupReport:
    """Evaluate the four emotion datasets of an EI task and macro-average."""
    if set(per_emotion) != set(EMOTIONS):
        raise ValueError(f"need exactly the emotions {EMOTIONS}, got {sorted(per_emotion)}")
    if kind not in (REGRESSION, ORDINAL):
        raise ValueError(f"unknown task kind {kind!r}")
    reports = {
        emo: evaluate(*per_emotion[emo], TaskSpec(kind, emo)) for emo in EMOTIONS
    }
    fields = _REGRESSION_FIELDS if kind == REGRESSION else _ORDINAL_FIELDS
    macro: Dict[str, Optional[float]] = {}
    undefined: Dict[str, str] = {}
    for name in fields:
        missing = [emo for emo in EMOTIONS if getattr(reports[emo], name) is None]
        if missing:
            macro[name] = None
            undefined[name] = "undefined for " + ", ".join(missing)
        else:
            macro[name] = float(np.mean([getattr(reports[emo], name) for emo in EMOTIONS]))
    for emo in EMOTIONS:
        reports[emo].ma_pearson = macro["pearson"]
    return GroupReport(kind, reports, macro, undefined)
