"""Command-line entry points: ``train``, ``predict`` and ``evaluate``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from . import data as dataio
from .data import DataError, FeaturizerDecl, RunManifest
from .ensemble import (
    EnsembleError,
    StackedEnsemble,
    load_ensemble,
    save_ensemble,
    train_ensemble,
)
from .featurize import (
    EmbeddingTable,
    FeaturizeError,
    Lexicon,
    LexiconFeaturizer,
    featurize_dataset,
    load_embedding_table,
    load_lexicon,
)
from .metrics import evaluate, evaluate_group
from .models.io import ModelFormatError
from .preprocess import EmojiMap, load_emoji_map, preprocess
from .tasks import EMOTIONS, TaskSpec

log = logging.getLogger("affectstack")

ENSEMBLE_FILE = "ensemble.json"
CV_REPORT_FILE = "cv_report.tsv"


class PipelineError(RuntimeError):
    """An error tagged with the pipeline stage it came from."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class _Stage:
    name: str

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError) and isinstance(
            exc, (ValueError, OSError, KeyError)
        ):
            raise PipelineError(self.name, str(exc)) from exc
        return False


def _merge_tables(fid: str, tables: Sequence[EmbeddingTable]) -> EmbeddingTable:
    merged = EmbeddingTable(fid, tables[0].dimension, {}, source=tables[0].source)
    for t in tables:
        if t.featurizer_id != fid:
            raise FeaturizeError(f"table {t.source} holds {t.featurizer_id!r}, expected {fid!r}")
        if t.dimension != merged.dimension:
            raise FeaturizeError(f"{fid}: tables disagree on dimension")
        dup = set(t.rows) & set(merged.rows)
        if dup:
            raise FeaturizeError(f"{fid}: tweet id(s) in several tables: {sorted(dup)[:10]}")
        merged.rows.update(t.rows)
    return merged


def _load_decls(decls: Sequence[FeaturizerDecl]) -> Dict[str, object]:
    featurizers: Dict[str, object] = {}
    for decl in decls:
        if decl.is_lexicon:
            lexicons = tuple(
                load_lexicon(lx.path, lx.kind, lx.name, lx.categories) for lx in decl.lexicons
            )
            featurizers[decl.id] = LexiconFeaturizer(decl.id, lexicons)
        else:
            tables = [load_embedding_table(p, decl.dimension) for p in decl.embeddings]
            featurizers[decl.id] = _merge_tables(decl.id, tables)
    return featurizers


def _featurizer_inputs(decls: Sequence[FeaturizerDecl], featurizers, emoji_map) -> dict:
    """What a bundle needs to rebuild the front end at prediction time."""
    feats = []
    for decl in decls:
        f = featurizers[decl.id]
        if isinstance(f, LexiconFeaturizer):
            feats.append({"id": decl.id, "kind": "lexicon",
                          "lexicons": [lx.to_dict() for lx in f.lexicons]})
        else:
            feats.append({"id": decl.id, "kind": "embeddings", "dimension": f.dimension,
                          "paths": [os.path.abspath(p) for p in decl.embeddings]})
    return {"emoji_map": dict(sorted(emoji_map.items())), "featurizers": feats}


def _apply_flags(manifest: RunManifest, lexicon_flags, embedding_flags) -> None:
    if lexicon_flags:
        lexicons = [dataio.parse_lexicon_flag(f) for f in lexicon_flags]
        manifest.featurizers = [d for d in manifest.featurizers if not d.is_lexicon]
        manifest.featurizers.insert(0, FeaturizerDecl("emoint", lexicons=lexicons))
    for path in embedding_flags or ():
        with open(path, encoding="utf-8") as fh:
            fid = fh.readline().split()[0]
        for d in manifest.featurizers:
            if d.id == fid:
                d.embeddings.append(path)
                break
        else:
            manifest.featurizers.append(FeaturizerDecl(fid, embeddings=[path]))


def write_cv_report(path, cv_results, ensemble: StackedEnsemble) -> None:
    chosen = {(m.featurizer_id, m.params.label()) for m in ensemble.members}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        n_folds = ensemble.n_folds
        fold_cols = "\t".join(f"fold{i + 1}" for i in range(n_folds))
        fh.write(f"featurizer\trank\tparams\tmean\t{fold_cols}\tdegenerate_folds\tselected\n")
        for fid, results in cv_results.items():
            for rank, r in enumerate(results, 1):
                folds = "\t".join(f"{s:.6f}" for s in r.fold_scores)
                degenerate = ",".join(str(f + 1) for f in r.degenerate_folds) or "-"
                sel = "yes" if (fid, r.params.label()) in chosen else "no"
                fh.write(f"{fid}\t{rank}\t{r.params.label()}\t{r.mean_score:.6f}\t{folds}"
                         f"\t{degenerate}\t{sel}\n")


def _predict_dataset(ensemble, dataset, emoji_map, featurizers):
    with _Stage("preprocess"):
        tweets = preprocess(dataset.tweets, emoji_map)
    with _Stage("featurize"):
        matrices = {}
        for fid in ensemble.featurizer_ids:
            if fid not in featurizers:
                raise PipelineError("featurize", f"featurizer {fid!r} is not configured")
            matrices[fid] = featurize_dataset(tweets, featurizers[fid])
    with _Stage("predict"):
        return ensemble.predict_matrices(matrices)


def cmd_train(
    manifest_path,
    lexicon_flags: Sequence[str] = (),
    embedding_flags: Sequence[str] = (),
    emoji_map_path: Optional[str] = None,
    output_dir: Optional[str] = None,
) -> StackedEnsemble:
    """Run the whole training pipeline described by a manifest.

    Writes ``ensemble.json`` and ``cv_report.tsv`` to the output directory,
    plus prediction files for any dev/test sets that are not merged into
    training.
    """
    with _Stage("manifest"):
        manifest = dataio.load_manifest(manifest_path)
        _apply_flags(manifest, lexicon_flags, embedding_flags)
        if emoji_map_path:
            manifest.emoji_map = emoji_map_path
        if output_dir:
            manifest.output_dir = output_dir
        manifest.validate()
    task = manifest.task
    with _Stage("load"):
        train = dataio.parse_dataset(manifest.train, task)
        dev = dataio.parse_dataset(manifest.dev, task) if manifest.dev else None
        test = dataio.parse_dataset(manifest.test, task) if manifest.test else None
        if dev is not None and manifest.merge_dev:
            train = dataio.Dataset(task, train.tweets + dev.tweets)
            dev = None
        gold = train.gold()
        emoji_map = load_emoji_map(manifest.emoji_map) if manifest.emoji_map else EmojiMap()
        featurizers = _load_decls(manifest.featurizers)
    with _Stage("preprocess"):
        tweets = preprocess(train.tweets, emoji_map)
    with _Stage("featurize"):
        matrices = {fid: featurize_dataset(tweets, f) for fid, f in featurizers.items()}
    with _Stage("train"):
        result = train_ensemble(matrices, gold, task, manifest.grid, manifest.seed,
                                n_jobs=manifest.n_jobs)
    ensemble = result.ensemble
    ensemble.inputs = _featurizer_inputs(manifest.featurizers, featurizers, emoji_map)
    ensemble.config_fingerprint = manifest.fingerprint
    with _Stage("persist"):
        os.makedirs(manifest.output_dir, exist_ok=True)
        save_ensemble(ensemble, os.path.join(manifest.output_dir, ENSEMBLE_FILE))
        write_cv_report(os.path.join(manifest.output_dir, CV_REPORT_FILE),
                        result.cv_results, ensemble)
    for name, ds in (("dev", dev), ("test", test)):
        if ds is None:
            continue
        preds = _predict_dataset(ensemble, ds, emoji_map, featurizers)
        with _Stage("persist"):
            dataio.write_predictions(
                os.path.join(manifest.output_dir, f"predictions_{name}.tsv"), ds.ids, task, preds
            )
    return ensemble


def _bundle_featurizers(ensemble: StackedEnsemble, embedding_flags: Sequence[str]):
    inputs = ensemble.inputs or {}
    emoji_map = EmojiMap(inputs.get("emoji_map", {}))
    overrides: Dict[str, List[EmbeddingTable]] = {}
    for path in embedding_flags or ():
        t = load_embedding_table(path)
        overrides.setdefault(t.featurizer_id, []).append(t)
    featurizers: Dict[str, object] = {}
    for entry in inputs.get("featurizers", []):
        fid = entry["id"]
        if entry["kind"] == "lexicon":
            lexicons = tuple(Lexicon.from_dict(d) for d in entry["lexicons"])
            featurizers[fid] = LexiconFeaturizer(fid, lexicons)
        elif fid in overrides:
            featurizers[fid] = _merge_tables(fid, overrides.pop(fid))
        else:
            tables = [load_embedding_table(p, entry["dimension"]) for p in entry["paths"]]
            featurizers[fid] = _merge_tables(fid, tables)
    for fid, tables in overrides.items():
        featurizers[fid] = _merge_tables(fid, tables)
    return emoji_map, featurizers


def cmd_predict(model_path, data_path, out_path, embedding_flags: Sequence[str] = ()):
    """Predict a dataset with a saved ensemble; one output row per tweet."""
    with _Stage("load"):
        try:
            ensemble = load_ensemble(model_path)
        except (EnsembleError, ModelFormatError) as exc:
            raise PipelineError("load", f"{model_path}: {exc}") from exc
        dims = dataio.sniff_dimension(data_path)
        if dims != ensemble.task.dimension:
            raise PipelineError(
                "load",
                f"task mismatch: ensemble is {ensemble.task.name} ({ensemble.task.dimension}) "
                f"but {data_path} holds {dims!r} tweets",
            )
        dataset = dataio.parse_dataset(data_path, ensemble.task)
        emoji_map, featurizers = _bundle_featurizers(ensemble, embedding_flags)
    preds = _predict_dataset(ensemble, dataset, emoji_map, featurizers)
    with _Stage("persist"):
        dataio.write_predictions(out_path, dataset.ids, ensemble.task, preds)
    return preds


def cmd_evaluate(pred_paths, data_paths, task_name: str, out_path=None, strict=False):
    """Score prediction files against gold datasets (joined by tweet id).

    One pair gives a single-task report; the four emotion datasets of an EI
    task give per-emotion reports plus macro averages. Returns
    ``(report, exit_code)``.
    """
    pred_paths, data_paths = list(pred_paths), list(data_paths)
    if len(pred_paths) != len(data_paths) or not pred_paths:
        raise PipelineError("evaluate", "give one --pred file per --data file")
    pairs = {}
    with _Stage("evaluate"):
        for pp, dp in zip(pred_paths, data_paths):
            task = TaskSpec.from_name(task_name, dataio.sniff_dimension(dp))
            dataset = dataio.parse_dataset(dp, task)
            try:
                pairs[task.dimension] = (task, *dataio.join_predictions(
                    dataio.read_predictions(pp), dataset))
            except DataError as exc:
                raise PipelineError("evaluate", f"{pp}: {exc}") from exc
        if len(pairs) == 1:
            task, pred, gold = next(iter(pairs.values()))
            report = evaluate(pred, gold, task)
            undefined = report.has_undefined()
        elif set(pairs) == set(EMOTIONS):
            report = evaluate_group({e: pairs[e][1:] for e in EMOTIONS}, pairs["anger"][0].kind)
            undefined = bool(report.undefined) or any(
                r.has_undefined() for r in report.reports.values())
        else:
            raise PipelineError(
                "evaluate", "several datasets must be exactly the four emotions of an EI task")
    text = report.to_text()
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return report, (1 if strict and undefined else 0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affectstack", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="grid search, select, stack and save an ensemble")
    t.add_argument("--manifest", required=True)
    t.add_argument("--lexicon", action="append", default=[], metavar="NAME=KIND:PATH")
    t.add_argument("--embeddings", action="append", default=[], metavar="PATH")
    t.add_argument("--emoji-map", metavar="PATH")
    t.add_argument("--out", help="output directory (overrides the manifest)")

    pr = sub.add_parser("predict", help="predict a dataset with a saved ensemble")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--embeddings", action="append", default=[], metavar="PATH",
                    help="embedding table covering the dataset's tweets")

    e = sub.add_parser("evaluate", help="score predictions against gold labels")
    e.add_argument("--pred", action="append", required=True)
    e.add_argument("--data", action="append", required=True)
    e.add_argument("--task", required=True, help="EI-reg, EI-oc, V-reg or V-oc")
    e.add_argument("--out")
    e.add_argument("--strict", action="store_true",
                   help="exit non-zero if any metric is undefined")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            ens = cmd_train(args.manifest, args.lexicon, args.embeddings, args.emoji_map,
                            args.out)
            print(f"trained {ens.task.name} ensemble with {len(ens.members)} members")
        elif args.command == "predict":
            preds = cmd_predict(args.model, args.data, args.out, args.embeddings)
            print(f"wrote {len(preds)} predictions to {args.out}")
        else:
            report, code = cmd_evaluate(args.pred, args.data, args.task, args.out, args.strict)
            sys.stdout.write(report.to_text())
            return code
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
