"""Dataset, prediction-file and run-manifest I/O."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .featurize import CATEGORICAL, SCORED
from .models.params import HyperParams
from .preprocess import RawTweet
from .tasks import ORDINAL, REGRESSION, TaskSpec

PathLike = Union[str, os.PathLike]

EMOTION_CLASS_TEXT = {
    0: "no {e} can be inferred",
    1: "low amount of {e} can be inferred",
    2: "moderate amount of {e} can be inferred",
    3: "high amount of {e} can be inferred",
}
VALENCE_CLASS_TEXT = {
    3: "very positive emotional state can be inferred",
    2: "moderately positive emotional state can be inferred",
    1: "slightly positive emotional state can be inferred",
    0: "neutral or mixed emotional state can be inferred",
    -1: "slightly negative emotional state can be inferred",
    -2: "moderately negative emotional state can be inferred",
    -3: "very negative emotional state can be inferred",
}


class DataError(ValueError):
    pass


class TaskMismatchError(DataError):
    pass


@dataclass
class Dataset:
    task: TaskSpec
    tweets: List[RawTweet]

    def __post_init__(self):
        seen = set()
        for tw in self.tweets:
            if tw.id in seen:
                raise DataError(f"duplicate tweet id {tw.id!r}")
            seen.add(tw.id)

    def __len__(self):
        return len(self.tweets)

    @property
    def ids(self) -> List[str]:
        return [t.id for t in self.tweets]

    @property
    def labeled(self) -> bool:
        return all(t.gold is not None for t in self.tweets)

    def gold(self) -> np.ndarray:
        missing = [t.id for t in self.tweets if t.gold is None]
        if missing:
            raise DataError(f"{len(missing)} tweet(s) have no gold label, e.g. {missing[0]!r}")
        dtype = np.float64 if self.task.kind == REGRESSION else np.int64
        return np.array([t.gold for t in self.tweets], dtype=dtype)


def class_text(task: TaskSpec, label: int) -> str:
    if task.dimension == "valence":
        return VALENCE_CLASS_TEXT[label]
    return EMOTION_CLASS_TEXT[label].format(e=task.dimension)


def _parse_gold(raw: str, task: TaskSpec, where: str):
    raw = raw.strip()
    if raw == "NONE":
        return None
    if task.kind == REGRESSION:
        try:
            value = float(raw)
        except ValueError:
            raise DataError(f"{where}: unparsable intensity {raw!r}") from None
        if not math.isfinite(value) or not task.lo <= value <= task.hi:
            raise DataError(f"{where}: intensity {raw} outside [{task.lo}, {task.hi}]")
        return value
    head = raw.split(":", 1)[0].strip()
    try:
        label = int(head)
    except ValueError:
        raise DataError(f"{where}: unparsable intensity class {raw!r}") from None
    if not task.class_lo <= label <= task.class_hi:
        raise DataError(
            f"{where}: class {label} outside {task.class_lo}..{task.class_hi}"
        )
    return label


def parse_dataset(path: PathLike, task: TaskSpec) -> Dataset:
    """Read a SemEval-style TSV: ``ID, tweet, affect dimension, intensity``.

    A first row whose first column is ``ID`` is treated as a header. Ordinal
    intensities look like ``"-3: very negative ..."``; only the integer
    before the first colon is used. ``NONE`` marks an unlabeled tweet.
    """
    tweets: List[RawTweet] = []
    seen: Dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if lineno == 1 and cols[0].strip() == "ID":
                continue
            where = f"{path}: line {lineno}"
            if len(cols) != 4:
                raise DataError(f"{where}: expected 4 tab-separated columns, got {len(cols)}")
            tid, text, dim, raw_gold = (c.strip() for c in cols)
            if not tid:
                raise DataError(f"{where}: empty tweet id")
            if not text:
                raise DataError(f"{where}: empty tweet text")
            if tid in seen:
                raise DataError(f"{where}: duplicate tweet id {tid!r} (first on line {seen[tid]})")
            if dim != task.dimension:
                raise TaskMismatchError(
                    f"{where}: affect dimension {dim!r} does not match task "
                    f"{task.name} ({task.dimension})"
                )
            seen[tid] = lineno
            tweets.append(RawTweet(tid, text, dim, _parse_gold(raw_gold, task, where)))
    return Dataset(task, tweets)


def sniff_dimension(path: PathLike) -> str:
    """Affect dimension named by the first data row of a dataset file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            cols = line.rstrip("\r\n").split("\t")
            if not line.strip() or (lineno == 1 and cols[0].strip() == "ID"):
                continue
            if len(cols) != 4:
                raise DataError(f"{path}: line {lineno}: expected 4 tab-separated columns")
            return cols[2].strip()
    raise DataError(f"{path}: no data rows")


def serialize_dataset(dataset: Dataset, path: PathLike) -> None:
    task = dataset.task
    gold_header = "Intensity Score" if task.kind == REGRESSION else "Intensity Class"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"ID\tTweet\tAffect Dimension\t{gold_header}\n")
        for tw in dataset.tweets:
            if any(c in tw.text for c in "\t\r\n"):
                raise DataError(f"tweet {tw.id!r}: text contains a tab or newline")
            if tw.gold is None:
                gold = "NONE"
            elif task.kind == REGRESSION:
                gold = repr(float(tw.gold))
            else:
                gold = f"{int(tw.gold)}: {class_text(task, int(tw.gold))}"
            fh.write(f"{tw.id}\t{tw.text}\t{tw.dimension}\t{gold}\n")


# -- predictions ---------------------------------------------------------------


def format_prediction(value, task: TaskSpec) -> str:
    if task.kind == ORDINAL:
        return str(int(value))
    return format(float(value), ".10g")


def write_predictions(path: PathLike, ids: Sequence[str], task: TaskSpec, values) -> None:
    values = list(values)
    if len(values) != len(ids):
        raise DataError("one prediction per tweet is required")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ID\tAffect Dimension\tPrediction\n")
        for tid, v in zip(ids, values):
            fh.write(f"{tid}\t{task.dimension}\t{format_prediction(v, task)}\n")


def read_predictions(path: PathLike) -> List[Tuple[str, str, float]]:
    rows = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if lineno == 1 and cols[0].strip() == "ID":
                continue
            if len(cols) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 tab-separated columns")
            tid = cols[0].strip()
            if tid in seen:
                raise DataError(f"{path}: line {lineno}: duplicate prediction for {tid!r}")
            seen.add(tid)
            try:
                value = float(cols[2])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: unparsable prediction {cols[2]!r}") from None
            rows.append((tid, cols[1].strip(), value))
    return rows


def join_predictions(rows, dataset: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Align predictions with gold by tweet id (not by row order)."""
    by_id = {tid: value for tid, _, value in rows}
    gold_ids = set(dataset.ids)
    missing = [tid for tid in dataset.ids if tid not in by_id]
    extra = [tid for tid, _, _ in rows if tid not in gold_ids]
    if missing or extra:
        parts = []
        if missing:
            parts.append("no prediction for: " + ", ".join(missing[:20]))
        if extra:
            parts.append("not in gold data: " + ", ".join(extra[:20]))
        raise DataError("; ".join(parts))
    pred = np.array([by_id[tid] for tid in dataset.ids])
    return pred, dataset.gold()


# -- run manifest ----------------------------------------------------------------


@dataclass
class LexiconDecl:
    name: str
    kind: str
    path: str
    categories: Optional[List[str]] = None


@dataclass
class FeaturizerDecl:
    id: str
    lexicons: List[LexiconDecl] = field(default_factory=list)
    embeddings: List[str] = field(default_factory=list)
    dimension: Optional[int] = None

    @property
    def is_lexicon(self) -> bool:
        return bool(self.lexicons)


@dataclass
class RunManifest:
    task: TaskSpec
    train: str
    featurizers: List[FeaturizerDecl]
    output_dir: str
    seed: int = 0
    dev: Optional[str] = None
    test: Optional[str] = None
    merge_dev: bool = False
    emoji_map: Optional[str] = None
    grid: Optional[List[HyperParams]] = None
    n_jobs: int = 1
    fingerprint: str = ""

    def validate(self) -> None:
        paths = [self.train, self.dev, self.test, self.emoji_map]
        for decl in self.featurizers:
            paths += [lx.path for lx in decl.lexicons] + list(decl.embeddings)
        missing = [p for p in paths if p is not None and not os.path.exists(p)]
        if missing:
            raise DataError("missing input file(s): " + ", ".join(missing))
        if not 0 <= self.seed < 2**32:
            raise DataError("seed must be an unsigned 32-bit integer")
        ids = [d.id for d in self.featurizers]
        if len(set(ids)) != len(ids):
            raise DataError("featurizer ids must be unique")
        if not self.featurizers:
            raise DataError("at least one featurizer must be declared")


def parse_lexicon_flag(flag: str, base: str = "") -> LexiconDecl:
    """``NAME=KIND:PATH`` as given to ``--lexicon``."""
    try:
        name, rest = flag.split("=", 1)
        kind, path = rest.split(":", 1)
    except ValueError:
        raise DataError(f"bad --lexicon value {flag!r}; expected NAME=KIND:PATH") from None
    if kind not in (SCORED, CATEGORICAL):
        raise DataError(f"bad lexicon kind {kind!r} in {flag!r}")
    return LexiconDecl(name, kind, os.path.join(base, path))


def _as_list(v) -> list:
    if v is None:
        return []
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_manifest(path: PathLike) -> RunManifest:
    """Read a YAML run manifest; relative paths resolve against its directory."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise DataError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"{path}: manifest must be a mapping")
    base = os.path.dirname(os.path.abspath(os.fspath(path)))

    def rel(p):
        return None if p is None else os.path.normpath(os.path.join(base, str(p)))

    try:
        task = TaskSpec.from_name(str(doc["task"]), doc.get("dimension"))
        feats = []
        for fd in doc["featurizers"]:
            lexicons = [
                LexiconDecl(lx["name"], lx["kind"], rel(lx["path"]), lx.get("categories"))
                for lx in fd.get("lexicons", [])
            ]
            embeddings = [rel(p) for p in _as_list(fd.get("embeddings"))]
            if bool(lexicons) == bool(embeddings):
                raise DataError(
                    f"featurizer {fd.get('id')!r} needs either lexicons or embeddings"
                )
            feats.append(FeaturizerDecl(str(fd["id"]), lexicons, embeddings, fd.get("dimension")))
        grid = None
        if doc.get("grid") is not None:
            grid = [HyperParams.from_dict(g) for g in doc["grid"]]
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise DataError("seed must be an integer")
        manifest = RunManifest(
            task=task,
            train=rel(doc["train"]),
            featurizers=feats,
            output_dir=rel(doc.get("output_dir", "out")),
            seed=seed,
            dev=rel(doc.get("dev")),
            test=rel(doc.get("test")),
            merge_dev=bool(doc.get("merge_dev", False)),
            emoji_map=rel(doc.get("emoji_map")),
            grid=grid,
            n_jobs=int(doc.get("n_jobs", 1)),
            fingerprint=hashlib.sha256(
                json.dumps(doc, sort_keys=True, default=str).encode()
            ).hexdigest(),
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing manifest key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: {exc}") from None
    return manifest

