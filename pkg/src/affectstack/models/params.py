from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Optional

RANDOM_FOREST = "random_forest"
GRADIENT_BOOSTED = "gradient_boosted"
RIDGE = "ridge"
ORDINAL = "ordinal"
FAMILIES = (RANDOM_FOREST, GRADIENT_BOOSTED, RIDGE, ORDINAL)
LOSS_KINDS = ("logistic", "squared")

_RELEVANT = {
    RANDOM_FOREST: ("n_trees", "max_depth", "feature_fraction", "min_samples_leaf"),
    GRADIENT_BOOSTED: (
        "n_trees",
        "max_depth",
        "learning_rate",
        "feature_fraction",
        "min_samples_leaf",
    ),
    RIDGE: ("lam",),
    ORDINAL: ("lam", "loss_kind"),
}


@dataclass(frozen=True)
class HyperParams:
    """One grid point of the model zoo.

    Only the keys relevant to ``family`` are meaningful; ``n_trees`` is the
    number of boosting rounds for gradient boosting.
    """

    family: str
    n_trees: int = 100
    max_depth: Optional[int] = None
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    feature_fraction: float = 1.0
    lam: float = 1.0
    loss_kind: str = "squared"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must be in (0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")

    def relevant(self) -> dict:
        return {k: getattr(self, k) for k in _RELEVANT[self.family]}

    def label(self) -> str:
        return self.family + "(" + ", ".join(f"{k}={v}" for k, v in self.relevant().items()) + ")"

    def to_dict(self) -> dict:
        return {"family": self.family, **self.relevant()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "HyperParams":
        d = dict(d)
        unknown = set(d) - set(asdict(cls(family=RIDGE)))
        if unknown:
            raise ValueError(f"unknown hyper-parameter keys: {sorted(unknown)}")
        return cls(**d)
