"""Feature extraction: native lexicon aggregates and precomputed embedding tables."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .preprocess import ProcessedTweet

__all__ = [
    "SCORED",
    "CATEGORICAL",
    "KNOWN_DIMENSIONS",
    "FeaturizeError",
    "Lexicon",
    "load_lexicon",
    "lexicon_features",
    "LexiconFeaturizer",
    "EmbeddingTable",
    "load_embedding_table",
    "FeatureMatrix",
    "featurize_dataset",
]

SCORED = "scored"
CATEGORICAL = "categorical"

# Output widths of the pretrained extractors the embedding tables stand in for.
KNOWN_DIMENSIONS = {
    "deepmoji_softmax": 64,
    "deepmoji_attention": 2304,
    "skip_thought": 4800,
    "sentiment_neuron": 4096,
}

PathLike = Union[str, os.PathLike]


class FeaturizeError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    name: str
    kind: str
    entries: Mapping
    affect_categories: Tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return 4 if self.kind == SCORED else len(self.affect_categories)

    def lookup(self, token: str):
        hit = self.entries.get(token)
        if hit is None and len(token) > 1 and token.startswith("#"):
            hit = self.entries.get(token[1:])
        return hit

    def to_dict(self) -> dict:
        if self.kind == SCORED:
            entries = {t: float(v) for t, v in sorted(self.entries.items())}
        else:
            entries = {t: sorted(c) for t, c in sorted(self.entries.items())}
        return {
            "name": self.name,
            "kind": self.kind,
            "affect_categories": list(self.affect_categories),
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Lexicon":
        if d["kind"] == SCORED:
            entries = {t: float(v) for t, v in d["entries"].items()}
        else:
            entries = {t: frozenset(c) for t, c in d["entries"].items()}
        return cls(d["name"], d["kind"], entries, tuple(d.get("affect_categories", ())))


def load_lexicon(
    path: PathLike,
    kind: str,
    name: Optional[str] = None,
    categories: Optional[Sequence[str]] = None,
) -> Lexicon:
    """Parse a scored (``term<TAB>score``) or categorical
    (``term<TAB>category<TAB>0|1``) lexicon file.

    Categorical lexicons order their categories by first appearance in the
    file unless ``categories`` is given explicitly.
    """
    if kind not in (SCORED, CATEGORICAL):
        raise FeaturizeError(f"unknown lexicon kind {kind!r}")
    name = name or os.path.splitext(os.path.basename(os.fspath(path)))[0]
    ncols = 2 if kind == SCORED else 3
    entries: Dict = {}
    seen_cats: List[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != ncols:
                raise FeaturizeError(
                    f"{path}: line {lineno}: expected {ncols} columns, got {len(cols)}"
                )
            term = cols[0].strip().lower()
            if not term:
                raise FeaturizeError(f"{path}: line {lineno}: empty term")
            if kind == SCORED:
                try:
                    score = float(cols[1])
                except ValueError:
                    raise FeaturizeError(
                        f"{path}: line {lineno}: non-numeric score {cols[1]!r}"
                    ) from None
                if not math.isfinite(score):
                    raise FeaturizeError(f"{path}: line {lineno}: non-finite score")
                entries[term] = score
            else:
                cat, flag = cols[1].strip(), cols[2].strip()
                if flag not in ("0", "1"):
                    raise FeaturizeError(
                        f"{path}: line {lineno}: association flag must be 0 or 1, got {flag!r}"
                    )
                if cat not in seen_cats:
                    seen_cats.append(cat)
                if flag == "1":
                    entries.setdefault(term, set()).add(cat)
    if kind == SCORED:
        return Lexicon(name, kind, entries)
    cats = tuple(categories) if categories is not None else tuple(seen_cats)
    frozen = {t: frozenset(c & set(cats)) for t, c in entries.items()}
    return Lexicon(name, kind, {t: c for t, c in frozen.items() if c}, cats)


def lexicon_features(tweet: ProcessedTweet, lexicons: Sequence[Lexicon]) -> np.ndarray:
    """Concatenated per-lexicon aggregates for one tweet.

    A scored lexicon contributes ``(sum, count, min, max)`` over matched
    tokens (min/max are 0 without matches); a categorical lexicon contributes
    one token count per affect category.
    """
    if not lexicons:
        raise FeaturizeError("at least one lexicon is required")
    parts = []
    for lex in lexicons:
        if lex.kind == SCORED:
            scores = [s for s in map(lex.lookup, tweet.tokens) if s is not None]
            if scores:
                parts.append([sum(scores), len(scores), min(scores), max(scores)])
            else:
                parts.append([0.0, 0.0, 0.0, 0.0])
        else:
            counts = dict.fromkeys(lex.affect_categories, 0)
            for tok in tweet.tokens:
                for cat in lex.lookup(tok) or ():
                    counts[cat] += 1
            parts.append([counts[c] for c in lex.affect_categories])
    return np.asarray([v for p in parts for v in p], dtype=np.float64)


@dataclass
class FeatureMatrix:
    featurizer_id: str
    ids: List[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.ids):
            raise FeaturizeError(
                f"{self.featurizer_id}: matrix shape {self.values.shape} does not match "
                f"{len(self.ids)} ids"
            )
        if not np.all(np.isfinite(self.values)):
            raise FeaturizeError(f"{self.featurizer_id}: non-finite feature values")

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class LexiconFeaturizer:
    featurizer_id: str
    lexicons: Tuple[Lexicon, ...]

    def __post_init__(self):
        if not self.lexicons:
            raise FeaturizeError(f"{self.featurizer_id}: no lexicons configured")

    @property
    def dimension(self) -> int:
        return sum(lex.width for lex in self.lexicons)

    def transform(self, tweets: Sequence[ProcessedTweet]) -> FeatureMatrix:
        values = np.zeros((len(tweets), self.dimension))
        for i, tw in enumerate(tweets):
            values[i] = lexicon_features(tw, self.lexicons)
        return FeatureMatrix(self.featurizer_id, [t.id for t in tweets], values)


@dataclass
class EmbeddingTable:
    featurizer_id: str
    dimension: int
    rows: Dict[str, np.ndarray] = field(default_factory=dict)
    source: Optional[str] = None

    def __len__(self):
        return len(self.rows)

    def transform(self, tweets: Sequence[ProcessedTweet]) -> FeatureMatrix:
        missing = [t.id for t in tweets if t.id not in self.rows]
        if missing:
            shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
            raise FeaturizeError(
                f"{self.featurizer_id}: {len(missing)} tweet id(s) missing from "
                f"embedding table: {shown}"
            )
        values = np.empty((len(tweets), self.dimension))
        for i, tw in enumerate(tweets):
            values[i] = self.rows[tw.id]
        return FeatureMatrix(self.featurizer_id, [t.id for t in tweets], values)


def load_embedding_table(path: PathLike, expected_dim: Optional[int] = None) -> EmbeddingTable:
    """Read a precomputed embedding table.

    The first line is ``<featurizer_id> <dimension>``; each further line is
    ``<tweet_id><TAB><v1> ... <vd>``. When ``expected_dim`` is omitted, the
    known width for the featurizer id is enforced if there is one.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FeaturizeError(f"{path}: header must be '<featurizer_id> <dimension>'")
        fid = header[0]
        try:
            dim = int(header[1])
        except ValueError:
            raise FeaturizeError(f"{path}: bad dimension {header[1]!r} in header") from None
        if dim <= 0:
            raise FeaturizeError(f"{path}: dimension must be positive")
        if expected_dim is None:
            expected_dim = KNOWN_DIMENSIONS.get(fid, dim)
        if dim != expected_dim:
            raise FeaturizeError(
                f"{path}: header dimension {dim} does not match expected {expected_dim}"
            )
        rows: Dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            tid, sep, rest = line.partition("\t")
            if not sep or not tid:
                raise FeaturizeError(f"{path}: line {lineno}: expected '<id>\\t<values>'")
            if tid in rows:
                raise FeaturizeError(f"{path}: line {lineno}: duplicate tweet id {tid!r}")
            try:
                vec = np.array([float(v) for v in rest.split()], dtype=np.float64)
            except ValueError:
                raise FeaturizeError(
                    f"{path}: line {lineno}: non-numeric value for tweet {tid!r}"
                ) from None
            if vec.shape[0] != dim:
                raise FeaturizeError(
                    f"{path}: line {lineno}: tweet {tid!r} has {vec.shape[0]} values, "
                    f"expected {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise FeaturizeError(f"{path}: line {lineno}: non-finite value for tweet {tid!r}")
            rows[tid] = vec
    return EmbeddingTable(fid, dim, rows, source=os.fspath(path))


def write_embedding_table(path: PathLike, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{table.featurizer_id} {table.dimension}\n")
        for tid, vec in table.rows.items():
            fh.write(tid + "\t" + " ".join(repr(float(v)) for v in vec) + "\n")


def featurize_dataset(tweets: Sequence[ProcessedTweet], featurizer) -> FeatureMatrix:
    """Row ``i`` of the result is the feature vector of ``tweets[i]``."""
    fm = featurizer.transform(tweets)
    if fm.dimension != featurizer.dimension:
        raise FeaturizeError(
            f"{featurizer.featurizer_id}: produced width {fm.dimension}, "
            f"declared {featurizer.dimension}"
        )
    return fm
