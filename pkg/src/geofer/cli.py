"""Command-line interface: ``geofer <command> ...`` (or ``python -m geofer``).

Every command writes its outputs plus a ``run_metadata.txt`` sidecar into
``--out``. Failures print one JSON object on stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .boost import BoostResult
from .config import ExperimentConfig, RunMetadata, __version__, load_config
from .errors import FormatError, GeoferError, StageError
from .features import enumerate_elements, feature_matrix, write_feature_csv
from .landmark_io import LandmarkSequence, ManifestEntry, load_manifest, save_sequence, write_manifest
from .metrics import ConfusionMatrix
from .normalize import load_mean_graph, normalize_sequence, resample, save_mean_graph
from .synthgen import SynthConfig, generate, generate_coupled_pair, no_jitter

log = logging.getLogger("geofer")

# command-line flags that map directly onto ExperimentConfig fields
_CONFIG_FLAGS = ("kind", "rounds", "folds", "n_frames", "landmark_subset", "selection", "boost_mode")


def _config(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    overrides["seed"] = args.seed
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        return load_config(args.config, **{k: str(v) for k, v in overrides.items()})
    return ExperimentConfig(**overrides)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(path, meta):
    manifest, sequences = load_manifest(path)
    meta.add_input(path)
    for entry in manifest.entries:
        meta.add_input(manifest.resolve(entry))
    return manifest, sequences


def _write_confusion(out: Path, cm: ConfusionMatrix, prefix="confusion"):
    (out / f"{prefix}_counts.csv").write_text(cm.to_csv())
    (out / f"{prefix}_rates.csv").write_text(cm.rates_csv())


def _summary(out: Path, cm: ConfusionMatrix, extra=()):
    lines = [f"macro_accuracy = {ev.macro_accuracy(cm):.4f}", f"accuracy = {cm.accuracy:.4f}",
             f"samples = {cm.total}", *extra]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


# ----------------------------------------------------------------- commands

def cmd_synth(args, meta):
    cfg = SynthConfig(n_classes=args.classes, per_category=args.per_category, sigma=args.sigma,
                      seed=args.seed if args.seed is not None else 0, name=args.name)
    if args.no_jitter:
        cfg = no_jitter(cfg)
    if args.coupled:
        from dataclasses import replace
        dataset = generate_coupled_pair(replace(cfg, n_classes=2))
    else:
        dataset = generate(cfg)
    manifest = dataset.save(_out(args))
    print(manifest)


def cmd_normalize(args, meta):
    config = _config(args)
    manifest, sequences = _load(args.manifest, meta)
    out = _out(args)
    if args.mean_graph:
        mean = load_mean_graph(args.mean_graph)
        meta.add_input(args.mean_graph)
    else:
        points, reference = ev.select_points(sequences, config)
        mean, _ = ev.fit_front(points, reference, config)
    save_mean_graph(mean, out / "mean_graph.csv")
    points, _ = ev.select_points(sequences, config)
    entries = []
    for seq, pts, entry in zip(sequences, points, manifest.entries):
        norm = normalize_sequence(pts, mean)
        if not args.keep_length:
            norm = resample(norm, config.n_frames)
        fname = f"{Path(entry.path).stem}.csv"
        save_sequence(LandmarkSequence(norm.points, seq.source_id, seq.label), out / fname)
        entries.append(ManifestEntry(fname, entry.label, entry.subject, entry.dataset))
    write_manifest(out / "manifest.csv", entries, manifest.label_set)


def _normalized_for(args, config, sequences, meta):
    points, reference = ev.select_points(sequences, config)
    if args.mean_graph:
        meta.add_input(args.mean_graph)
        mean = load_mean_graph(args.mean_graph)
        return mean, ev.normalize_dataset(points, mean, config.n_frames)
    return ev.fit_front(points, reference, config)


def cmd_extract(args, meta):
    config = _config(args)
    manifest, sequences = _load(args.manifest, meta)
    _, norm = _normalized_for(args, config, sequences, meta)
    if args.selection_file:
        meta.add_input(args.selection_file)
        elements = list(BoostResult.load(args.selection_file).selected)
    else:
        elements = enumerate_elements(config.kind, norm.shape[2])
    X, keys = feature_matrix(norm, elements)
    write_feature_csv(_out(args) / f"features_{elements[0].kind}.csv", X,
                      keys, [s.source_id for s in sequences], [s.label for s in sequences])
    print(f"{X.shape[0]} sequences x {X.shape[1]} features")


def cmd_select(args, meta):
    config = _config(args)
    if config.kind == "point":
        raise GeoferError("selection needs --kind line or triangle")
    manifest, sequences = _load(args.manifest, meta)
    _, norm = _normalized_for(args, config, sequences, meta)
    y = ev.encode_labels(sequences, manifest.label_set)
    result, excluded = ev.boost_select(norm, y, len(manifest.label_set), config)
    out = _out(args)
    result.save(out / "selection.csv")
    if excluded:
        with open(out / "excluded.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["element", "reason"])
            writer.writerows([str(e), reason] for e, reason in excluded)
    print(f"selected {result.M} {config.kind}s; {len(excluded)} candidates excluded")


def cmd_train(args, meta):
    config = _config(args)
    manifest, sequences = _load(args.manifest, meta)
    model = ev.fit_pipeline(sequences, config, manifest.label_set)
    model.save(_out(args) / "model")
    print(f"C={model.grid.C:g} gamma={model.grid.gamma:g} features={len(model.keys)}")


def cmd_predict(args, meta):
    model = ev.PipelineModel.load(args.model)
    manifest, sequences = _load(args.manifest, meta)
    pred = ev.predict_pipeline(model, sequences)
    out = _out(args)
    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "true", "predicted"])
        for seq, p in zip(sequences, pred):
            writer.writerow([seq.source_id, seq.label or "", model.label_set[p]])
    if all(s.label in model.label_set for s in sequences):
        y = ev.encode_labels(sequences, model.label_set)
        cm = ConfusionMatrix.from_predictions(y, pred, model.label_set)
        _write_confusion(out, cm)
        if (cm.counts.sum(axis=1) > 0).all():
            _summary(out, cm)


def cmd_eval(args, meta):
    config = _config(args)
    manifest, sequences = _load(args.manifest, meta)
    result = ev.kfold_evaluate(sequences, config, manifest.label_set, jobs=args.jobs)
    out = _out(args)
    _write_confusion(out, result.confusion)
    (out / "folds.csv").write_text(result.folds_csv())
    extra = [f"selection = {config.selection}"]
    if config.selection == "global":
        extra.append("note = selection saw all data; accuracy is optimistic")
    _summary(out, result.confusion, extra)


def cmd_cross_eval(args, meta):
    config = _config(args)
    train_manifest, train = _load(args.train, meta)
    test_manifest, test = _load(args.test, meta)
    result = ev.cross_dataset(train, test, config, train_manifest.label_set, test_manifest.label_set)
    out = _out(args)
    _write_confusion(out, result.confusion)
    _summary(out, result.confusion)


def cmd_sweep(args, meta):
    config = _config(args)
    manifest, sequences = _load(args.manifest, meta)
    m_values = [int(t) for t in args.m_values.split(",") if t.strip()]
    result = ev.sweep_feature_count(sequences, config, m_values, manifest.label_set, _out(args))
    print(result.to_csv(), end="")


# ------------------------------------------------------------------ parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    def experiment(p, kind=True):
        if kind:
            p.add_argument("--kind", choices=("point", "line", "triangle"))
        p.add_argument("--rounds", type=int, help="boosting rounds M")
        p.add_argument("--n-frames", dest="n_frames", type=int)
        p.add_argument("--subset", dest="landmark_subset", help="25, 34, 52, all or i,j,k,...")
        p.add_argument("--boost-mode", dest="boost_mode", choices=("rescore", "retrain"))

    parser = argparse.ArgumentParser(prog="geofer", parents=[common],
                                     description="Geometric facial-expression recognition experiments.")
    parser.add_argument("--version", action="version", version=f"geofer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--per-category", type=int, default=40)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--no-jitter", action="store_true")
    p.add_argument("--coupled", action="store_true", help="two-category coupled-pair benchmark")
    p.add_argument("--name", default="synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("normalize", parents=[common], help="normalize and resample sequences")
    p.add_argument("manifest")
    p.add_argument("--mean-graph", help="reuse a saved mean graph")
    p.add_argument("--keep-length", action="store_true", help="skip temporal resampling")
    experiment(p, kind=False)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("extract", parents=[common], help="write summary feature matrices")
    p.add_argument("manifest")
    p.add_argument("--mean-graph")
    p.add_argument("--selection", dest="selection_file",
                   help="selection.csv; restricts output to the selected elements")
    experiment(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("select", parents=[common], help="boosted element selection")
    p.add_argument("manifest")
    p.add_argument("--mean-graph")
    experiment(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", parents=[common], help="fit the full pipeline")
    p.add_argument("manifest")
    experiment(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="apply a trained model")
    p.add_argument("model", help="model directory written by 'train'")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="k-fold cross-validation")
    p.add_argument("manifest")
    p.add_argument("--folds", type=int)
    p.add_argument("--selection", choices=("strict", "global"))
    p.add_argument("--jobs", type=int, default=1, help="folds evaluated in parallel")
    experiment(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cross-eval", parents=[common], help="train on one dataset, test on another")
    p.add_argument("train")
    p.add_argument("test")
    experiment(p)
    p.set_defaults(func=cmd_cross_eval)

    p = sub.add_parser("sweep", parents=[common], help="accuracy versus number of boosted elements")
    p.add_argument("manifest")
    p.add_argument("--m-values", default="1,5,10,20,50", help="ascending comma list")
    p.add_argument("--folds", type=int)
    experiment(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _error_payload(exc) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, StageError):
        payload["fold"] = exc.fold
        payload["cause"] = type(exc.cause).__name__
    if isinstance(exc, FormatError):
        payload["path"] = None if exc.path is None else str(exc.path)
        payload["line"] = exc.line
    return payload


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config(args) if args.command != "synth" else ExperimentConfig(seed=args.seed or 0)
        meta = RunMetadata(config, config.seed, " ".join(["geofer", *(argv if argv is not None else sys.argv[1:])]))
        args.func(args, meta)
        meta.finish()
        meta.write(_out(args) / "run_metadata.txt")
    except (GeoferError, OSError, ValueError) as exc:
        print(json.dumps(_error_payload(exc), sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
