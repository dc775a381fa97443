"""End-to-end experiments: pipeline fitting, k-fold CV, cross-dataset runs and sweeps.

In the default ``strict`` protocol every statistic (mean graph, candidate
ELMs, boosting, SVM scaling and grid search) is computed from the training
split only. ``selection="global"`` boosts once on the whole dataset and is
optimistic by construction.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boost import BoostResult, ElmParams, samme_select_retrain, select_from_bank, train_candidates
from .config import ExperimentConfig, derive_seed
from .errors import ConfigError, DatasetError, GeoferError, StageError
from .features import assembly_plan, enumerate_elements, feature_matrix, iter_candidate_features, key_to_str
from .metrics import ConfusionMatrix, macro_accuracy, stratified_folds
from .normalize import (MeanFaceGraph, compute_mean_graph, default_reference, format_mean_graph,
                        load_mean_graph, normalize_dataset, save_mean_graph)
from .svm import GridSearchResult, grid_search, load_svm, save_svm, svm_predict_batch, train_svm
from .template import resolve_subset

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ helpers

def label_set_of(sequences, label_set=None):
    if label_set is not None:
        return tuple(label_set)
    return tuple(sorted({s.label for s in sequences}))


def encode_labels(sequences, label_set):
    index = {l: k for k, l in enumerate(label_set)}
    try:
        return np.array([index[s.label] for s in sequences], dtype=np.intp)
    except KeyError as exc:
        raise DatasetError(f"label {exc.args[0]!r} not in label set {label_set}") from None


def select_points(sequences, config: ExperimentConfig):
    """Apply the landmark subset; returns raw point arrays and the remapped reference pair."""
    n_points = {s.point_count for s in sequences}
    if len(n_points) != 1:
        raise DatasetError(f"sequences disagree on point count: {sorted(n_points)}")
    (P,) = n_points
    try:
        subset = resolve_subset(config.landmark_subset, P)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    reference = config.reference_landmarks
    if reference is None:
        reference = default_reference(P)
    if subset is None:
        return [s.points for s in sequences], reference
    pos = {p: k for k, p in enumerate(subset)}
    if reference is not None:
        if any(r not in pos for r in reference):
            raise ConfigError(f"reference landmarks {reference} not in subset {config.landmark_subset}")
        reference = (pos[reference[0]], pos[reference[1]])
    cols = list(subset)
    return [s.points[:, cols] for s in sequences], reference


def elm_params(config: ExperimentConfig) -> ElmParams:
    return ElmParams(config.elm_hidden, config.elm_activation, config.elm_ridge, config.elm_standardize)


# ----------------------------------------------------------------- pipeline

@dataclass(eq=False)
class PipelineModel:
    config: ExperimentConfig
    label_set: tuple
    mean: MeanFaceGraph
    elements: tuple
    keys: tuple
    svm: object
    selection: BoostResult | None = None
    grid: GridSearchResult | None = None
    excluded: list = field(default_factory=list)

    def _parts(self):
        parts = {
            "config.txt": self.config.to_text().encode(),
            "labels.txt": ("\n".join(self.label_set) + "\n").encode(),
            "mean_graph.csv": format_mean_graph(self.mean).encode(),
            "features.txt": ("\n".join(key_to_str(k) for k in self.keys) + "\n").encode(),
            "svm.npz": self.svm.to_bytes(),
        }
        if self.selection is not None:
            parts["selection.csv"] = (f"#K={self.selection.K}\n" + self.selection.to_csv()).encode()
        return parts

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        for name, blob in sorted(self._parts().items()):
            out.write(f"{name}\0{len(blob)}\0".encode())
            out.write(blob)
        return out.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, blob in self._parts().items():
            (out / name).write_bytes(blob)

    @classmethod
    def load(cls, model_dir) -> "PipelineModel":
        from .config import load_config
        d = Path(model_dir)
        config = load_config(d / "config.txt")
        label_set = tuple(l for l in (d / "labels.txt").read_text().splitlines() if l)
        mean = load_mean_graph(d / "mean_graph.csv")
        selection = BoostResult.load(d / "selection.csv") if (d / "selection.csv").exists() else None
        if selection is not None:
            elements = selection.selected
        else:
            elements = tuple(enumerate_elements("point", mean.point_count))
        keys, _ = assembly_plan(list(elements))
        with open(d / "svm.npz", "rb") as fh:
            svm = load_svm(io.BytesIO(fh.read()))
        return cls(config, label_set, mean, tuple(elements), keys, svm, selection)


def _normalized(points, mean, config):
    return normalize_dataset(points, mean, config.n_frames)


def fit_front(points, reference, config):
    mean = compute_mean_graph(points, config.scale_reference, reference)
    return mean, _normalized(points, mean, config)


def boost_select(norm, y, n_classes, config, rounds=None):
    """Candidate ELM bank plus SAMME selection; returns ``(BoostResult, excluded)``."""
    kind = config.kind
    rounds = config.boost_rounds if rounds is None else rounds
    candidates = enumerate_elements(kind, norm.shape[2])
    master = derive_seed(config.seed, "elm")
    params = elm_params(config)
    if config.boost_mode == "retrain":
        def chunks():
            return iter_candidate_features(norm, candidates, config.elm_input, config.chunk_size)
        return samme_select_retrain(chunks, y, rounds, n_classes, params, master), []
    bank = train_candidates(
        iter_candidate_features(norm, candidates, config.elm_input, config.chunk_size),
        y, n_classes, params, master)
    return select_from_bank(bank, y, rounds, n_classes), bank.excluded


def fit_back(norm, y, elements, label_set, config, grid_seed):
    X, keys = feature_matrix(norm, list(elements))
    n_classes = len(label_set)
    grid = grid_search(X, y, config.c_grid, config.gamma_grid, config.grid_folds,
                       seed=grid_seed, n_classes=n_classes, tol=config.svm_tol)
    model = train_svm(X, y, grid.C, grid.gamma, n_classes, config.svm_tol, label_set)
    return keys, model, grid


def fit_pipeline(sequences, config: ExperimentConfig, label_set=None, elements=None) -> PipelineModel:
    """Fit normalization, selection and the SVM on ``sequences``.

    ``elements`` fixes the selected lines/triangles and skips boosting.
    """
    label_set = label_set_of(sequences, label_set)
    y = encode_labels(sequences, label_set)
    points, reference = select_points(sequences, config)
    mean, norm = fit_front(points, reference, config)
    selection, excluded = None, []
    if config.kind == "point":
        elements = tuple(enumerate_elements("point", norm.shape[2]))
    elif elements is None:
        selection, excluded = boost_select(norm, y, len(label_set), config)
        elements = selection.selected
    keys, svm, grid = fit_back(norm, y, elements, label_set, config, derive_seed(config.seed, "grid"))
    return PipelineModel(config, label_set, mean, tuple(elements), keys, svm, selection, grid, excluded)


def predict_pipeline(model: PipelineModel, sequences) -> np.ndarray:
    """Category indices (into ``model.label_set``) for new sequences."""
    points, _ = select_points(sequences, model.config)
    norm = _normalized(points, model.mean, model.config)
    X, keys = feature_matrix(norm, list(model.elements))
    return svm_predict_batch(model.svm, X)


# ------------------------------------------------------------ experiments

@dataclass
class KFoldResult:
    confusion: ConfusionMatrix
    fold_of: np.ndarray
    fold_accuracies: list
    model_digests: list
    selections: list
    grids: list

    @property
    def macro_accuracy(self) -> float:
        return macro_accuracy(self.confusion)

    def folds_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["fold", "n_test", "accuracy", "C", "gamma", "model_sha256"])
        for f, (acc, grid, dig) in enumerate(zip(self.fold_accuracies, self.grids, self.model_digests)):
            n_test = int(np.sum(self.fold_of == f))
            writer.writerow([f, n_test, f"{acc:.4f}", repr(grid.C), repr(grid.gamma), dig])
        return buf.getvalue()


def _fold_split(y, config):
    return stratified_folds(y, config.folds, derive_seed(config.seed, "folds"))


def _run_fold(sequences, y, fold_of, f, config, label_set, fixed):
    train = np.flatnonzero(fold_of != f)
    test = np.flatnonzero(fold_of == f)
    try:
        model = fit_pipeline([sequences[i] for i in train], config, label_set, elements=fixed)
        pred = predict_pipeline(model, [sequences[i] for i in test])
    except GeoferError as exc:
        raise StageError(f, exc) from exc
    cm = ConfusionMatrix.from_predictions(y[test], pred, label_set)
    return cm, model.digest(), model.elements, model.grid


def kfold_evaluate(sequences, config: ExperimentConfig, label_set=None, fold_of=None,
                   jobs=1) -> KFoldResult:
    """Stratified k-fold CV; one confusion matrix aggregated over all folds.

    ``fold_of`` overrides the seeded stratified assignment. With ``jobs > 1``
    folds run in worker processes; the result does not depend on ``jobs``.
    """
    label_set = label_set_of(sequences, label_set)
    y = encode_labels(sequences, label_set)
    if fold_of is None:
        fold_of = _fold_split(y, config)
    fold_of = np.asarray(fold_of, dtype=np.intp)
    n_folds = int(fold_of.max()) + 1
    fixed = None
    if config.selection == "global" and config.kind != "point":
        fixed = fit_pipeline_selection_only(sequences, config, label_set)
    args = [(sequences, y, fold_of, f, config, label_set, fixed) for f in range(n_folds)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_fold, *zip(*args)))
    else:
        outcomes = []
        for a in args:
            outcomes.append(_run_fold(*a))
            cm, _, _, grid = outcomes[-1]
            log.info("fold %d/%d: accuracy %.2f%% (C=%g, gamma=%g)", a[3] + 1, n_folds,
                     cm.accuracy, grid.C, grid.gamma)
    total = ConfusionMatrix(np.zeros((len(label_set),) * 2, dtype=np.int64), label_set)
    for cm, *_ in outcomes:
        total = total + cm
    return KFoldResult(total, fold_of, [o[0].accuracy for o in outcomes], [o[1] for o in outcomes],
                       [o[2] for o in outcomes], [o[3] for o in outcomes])


def fit_pipeline_selection_only(sequences, config, label_set):
    y = encode_labels(sequences, label_set)
    points, reference = select_points(sequences, config)
    _, norm = fit_front(points, reference, config)
    selection, _ = boost_select(norm, y, len(label_set), config)
    return selection.selected


@dataclass
class CrossResult:
    confusion: ConfusionMatrix
    model: PipelineModel

    @property
    def macro_accuracy(self) -> float:
        return macro_accuracy(self.confusion)


def cross_dataset(train_sequences, test_sequences, config: ExperimentConfig,
                  train_labels=None, test_labels=None) -> CrossResult:
    """Fit the whole pipeline on one dataset and evaluate it once on another."""
    train_set = label_set_of(train_sequences, train_labels)
    test_set = label_set_of(test_sequences, test_labels)
    if train_set != test_set:
        raise DatasetError(f"label sets differ: {train_set} vs {test_set}")
    model = fit_pipeline(train_sequences, config, train_set)
    pred = predict_pipeline(model, test_sequences)
    y = encode_labels(test_sequences, test_set)
    return CrossResult(ConfusionMatrix.from_predictions(y, pred, test_set), model)


@dataclass
class SweepResult:
    m_values: tuple
    confusions: list

    def rows(self):
        return [(m, macro_accuracy(cm), cm.accuracy) for m, cm in zip(self.m_values, self.confusions)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["M", "macro_accuracy", "accuracy"])
        for m, macro, acc in self.rows():
            writer.writerow([m, f"{macro:.4f}", f"{acc:.4f}"])
        return buf.getvalue()


def sweep_feature_count(sequences, config: ExperimentConfig, m_values, label_set=None,
                        out_dir=None) -> SweepResult:
    """Cross-validated accuracy for each number of boosted elements.

    Boosting runs once per fold with ``max(m_values)`` rounds; smaller M use
    the first M selections, which is exactly what an M-round run returns.
    """
    m_values = tuple(int(m) for m in m_values)
    if not m_values or list(m_values) != sorted(set(m_values)) or m_values[0] < 1:
        raise ConfigError("M values must be positive, distinct and ascending")
    if config.kind == "point":
        raise ConfigError("feature-count sweeps need line or triangle features")
    label_set = label_set_of(sequences, label_set)
    y = encode_labels(sequences, label_set)
    fold_of = _fold_split(y, config)
    K = len(label_set)
    totals = [np.zeros((K, K), dtype=np.int64) for _ in m_values]
    for f in range(config.folds):
        train = np.flatnonzero(fold_of != f)
        test = np.flatnonzero(fold_of == f)
        try:
            tr_points, reference = select_points([sequences[i] for i in train], config)
            te_points, _ = select_points([sequences[i] for i in test], config)
            mean, norm = fit_front(tr_points, reference, config)
            test_norm = _normalized(te_points, mean, config)
            selection, _ = boost_select(norm, y[train], K, config, rounds=m_values[-1])
            for k, m in enumerate(m_values):
                elements = selection.head(m).selected
                _, svm, _ = fit_back(norm, y[train], elements, label_set, config,
                                     derive_seed(config.seed, "grid"))
                X, _ = feature_matrix(test_norm, list(elements))
                pred = svm_predict_batch(svm, X)
                np.add.at(totals[k], (y[test], pred), 1)
        except GeoferError as exc:
            raise StageError(f, exc) from exc
        log.info("sweep fold %d/%d done", f + 1, config.folds)
    result = SweepResult(m_values, [ConfusionMatrix(t, label_set) for t in totals])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(result.to_csv())
        write_sweep_plot(result, out / "sweep.svg")
    return result


def _fmt(v) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def svg_line_plot(xs, ys, xlabel="", ylabel="", width=480, height=320) -> str:
    """Minimal deterministic SVG line chart with markers and labelled axes."""
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    left, right, top, bottom = 60, 20, 20, 50
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    y0, y1 = min(ys), max(ys)
    pad = max(1.0, 0.1 * (y1 - y0))
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in np.linspace(y0, y1, 5):
        out.append(f'<line x1="{left - 4}" y1="{_fmt(py(t))}" x2="{left}" y2="{_fmt(py(t))}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(py(t) + 4)}" text-anchor="end">{t:.1f}</text>')
    for x in xs:
        out.append(f'<line x1="{_fmt(px(x))}" y1="{top + ph}" x2="{_fmt(px(x))}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(x))}" y="{top + ph + 16}" text-anchor="middle">{x:g}</text>')
    pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    for x, y in zip(xs, ys):
        out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="#1f77b4"/>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text transform="translate(14,{top + ph / 2}) rotate(-90)" text-anchor="middle">{ylabel}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_sweep_plot(result: SweepResult, path) -> None:
    rows = result.rows()
    svg = svg_line_plot([r[0] for r in rows], [r[1] for r in rows],
                        "number of boosted elements (M)", "macro accuracy (%)")
    Path(path).write_text(svg)
