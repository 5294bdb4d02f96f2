"""Versioned, self-describing model files.

A model file is a JSON document::

    {"format": "affectstack.model", "version": 1, "kind": ..., "n_features": d,
     "n_classes": K, "checksum": sha256(body), "body": {...}}

Arrays inside the body are stored as base64 little-endian buffers so that a
loaded model reproduces the saved one bit for bit.
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
from typing import Any, Mapping, Union

import numpy as np

from .ordinal import OrdinalThresholdModel
from .ridge import RidgeModel
from .trees import Tree, TreeEnsembleModel

FORMAT = "affectstack.model"
VERSION = 1

_TREE_FIELDS = ("feature", "threshold", "left", "right", "value")


class ModelFormatError(ValueError):
    pass


class CorruptModelError(ModelFormatError):
    pass


class ModelVersionError(ModelFormatError):
    pass


def encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a)
    dtype = "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"
    buf = np.ascontiguousarray(a, dtype=dtype).tobytes()
    return {"dtype": dtype, "shape": list(a.shape), "data": base64.b64encode(buf).decode("ascii")}


def decode_array(d: Mapping) -> np.ndarray:
    if d["dtype"] not in ("<i8", "<f8"):
        raise CorruptModelError(f"unsupported array dtype {d['dtype']!r}")
    raw = base64.b64decode(d["data"].encode("ascii"), validate=True)
    arr = np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"])
    return arr.astype(arr.dtype.newbyteorder("="))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _body(model) -> tuple:
    if isinstance(model, RidgeModel):
        return "ridge", model.n_features, None, {
            "weights": encode_array(model.weights),
            "intercept": model.intercept,
            "lam": model.lam,
        }
    if isinstance(model, OrdinalThresholdModel):
        return "ordinal", model.n_features, model.n_classes, {
            "weights": encode_array(model.weights),
            "thresholds": encode_array(model.thresholds),
            "loss_kind": model.loss_kind,
            "lam": model.lam,
            "converged": model.converged,
            "n_iter": model.n_iter,
        }
    if isinstance(model, TreeEnsembleModel):
        return "tree_ensemble", model.n_features, model.n_classes or None, {
            "ensemble_kind": model.kind,
            "task": model.task,
            "learning_rate": model.learning_rate,
            "base_score": model.base_score,
            "seed": model.seed,
            "max_depth": model.max_depth,
            "trees": [{f: encode_array(getattr(t, f)) for f in _TREE_FIELDS} for t in model.trees],
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_to_dict(model) -> dict:
    kind, d, k, body = _body(model)
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "n_features": d,
        "n_classes": k,
        "checksum": hashlib.sha256(canonical_json(body).encode()).hexdigest(),
        "body": body,
    }


def model_from_dict(doc: Mapping):
    if not isinstance(doc, Mapping) or doc.get("format") != FORMAT:
        raise CorruptModelError("not an affectstack model document")
    version = doc.get("version")
    if not isinstance(version, int):
        raise CorruptModelError("missing format version")
    if version > VERSION:
        raise ModelVersionError(
            f"model format version {version} is newer than supported version {VERSION}"
        )
    if version < 1:
        raise ModelVersionError(f"unknown model format version {version}")
    try:
        body = doc["body"]
        if hashlib.sha256(canonical_json(body).encode()).hexdigest() != doc["checksum"]:
            raise CorruptModelError("model checksum mismatch")
        kind = doc["kind"]
        if kind == "ridge":
            return RidgeModel(decode_array(body["weights"]), float(body["intercept"]),
                              float(body["lam"]))
        if kind == "ordinal":
            return OrdinalThresholdModel(
                weights=decode_array(body["weights"]),
                thresholds=decode_array(body["thresholds"]),
                n_classes=int(doc["n_classes"]),
                loss_kind=body["loss_kind"],
                lam=float(body["lam"]),
                converged=bool(body["converged"]),
                n_iter=int(body["n_iter"]),
            )
        if kind == "tree_ensemble":
            trees = tuple(
                Tree(**{f: decode_array(t[f]) for f in _TREE_FIELDS}) for t in body["trees"]
            )
            return TreeEnsembleModel(
                kind=body["ensemble_kind"],
                task=body["task"],
                trees=trees,
                n_features=int(doc["n_features"]),
                n_classes=int(doc["n_classes"] or 0),
                learning_rate=float(body["learning_rate"]),
                base_score=float(body["base_score"]),
                seed=int(body["seed"]),
                max_depth=body["max_depth"],
            )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"corrupt model payload: {exc}") from exc
    raise CorruptModelError(f"unknown model kind {doc.get('kind')!r}")


def dumps_model(model) -> str:
    return canonical_json(model_to_dict(model))


def loads_model(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModelError(f"corrupt model payload: {exc}") from exc
    return model_from_dict(doc)


def save_model(model, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))
        fh.write("\n")


def load_model(path: Union[str, os.PathLike]):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
