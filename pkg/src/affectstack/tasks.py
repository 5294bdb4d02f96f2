from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

REGRESSION = "regression"
ORDINAL = "ordinal"
EMOTIONS = ("anger", "fear", "joy", "sadness")
DIMENSIONS = EMOTIONS + ("valence",)

_NAMES = {
    ("EI", "reg"): (REGRESSION, None),
    ("EI", "oc"): (ORDINAL, None),
    ("V", "reg"): (REGRESSION, "valence"),
    ("V", "oc"): (ORDINAL, "valence"),
}


@dataclass(frozen=True)
class TaskSpec:
    """Task kind plus affect dimension.

    Ordinal labels are contiguous integers (0..3 for emotions, -3..3 for
    valence) and map to internal classes ``label - class_lo``. Regression
    targets live in ``[lo, hi]``.
    """

    kind: str
    dimension: str
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in (REGRESSION, ORDINAL):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown affect dimension {self.dimension!r}")
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ValueError("regression bounds must satisfy 0 <= lo < hi <= 1")

    @classmethod
    def from_name(cls, name: str, dimension: Optional[str] = None) -> "TaskSpec":
        """``EI-reg``, ``EI-oc``, ``V-reg`` or ``V-oc``."""
        try:
            prefix, suffix = name.split("-")
            kind, fixed = _NAMES[(prefix, suffix)]
        except (ValueError, KeyError):
            raise ValueError(f"unknown task name {name!r}") from None
        if fixed is not None:
            if dimension not in (None, fixed):
                raise ValueError(f"{name} is a valence task, got dimension {dimension!r}")
            dimension = fixed
        elif dimension not in EMOTIONS:
            raise ValueError(f"{name} needs one of the emotions {EMOTIONS}, got {dimension!r}")
        return cls(kind, dimension)

    @property
    def name(self) -> str:
        prefix = "V" if self.dimension == "valence" else "EI"
        return f"{prefix}-{'reg' if self.kind == REGRESSION else 'oc'}"

    @property
    def is_emotion(self) -> bool:
        return self.dimension in EMOTIONS

    @property
    def class_lo(self) -> int:
        return -3 if self.dimension == "valence" else 0

    @property
    def class_hi(self) -> int:
        return 3

    @property
    def n_classes(self) -> int:
        return self.class_hi - self.class_lo + 1

    @property
    def labels(self) -> tuple:
        return tuple(range(self.class_lo, self.class_hi + 1))

    neutral_label = 0

    def to_internal(self, labels) -> np.ndarray:
        arr = np.asarray(labels)
        if np.any(arr != np.round(arr)):
            raise ValueError("ordinal labels must be integers")
        arr = arr.astype(np.int64)
        if arr.size and (arr.min() < self.class_lo or arr.max() > self.class_hi):
            raise ValueError(f"labels outside {self.class_lo}..{self.class_hi}")
        return arr - self.class_lo

    def to_label(self, internal) -> np.ndarray:
        return np.asarray(internal, dtype=np.int64) + self.class_lo

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d) -> "TaskSpec":
        return cls(d["kind"], d["dimension"], float(d.get("lo", 0.0)), float(d.get("hi", 1.0)))
