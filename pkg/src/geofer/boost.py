"""Feature-selective multi-class AdaBoost (SAMME) over per-element ELMs.

Each candidate line or triangle gets one ELM trained on that element's
features alone. Boosting then picks, round by round, the not-yet-selected
candidate with the smallest weighted training error, weighs it by
``log((1 - err) / err) + log(K - 1)`` and up-weights the samples it got wrong.
"""

from __future__ import annotations

import csv
import io
import logging
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .config import derive_seed
from .elm import fit_predict_stack
from .errors import FormatError
from .features import ElementId

log = logging.getLogger(__name__)

EPS = 1e-10
# err this close to 1 - 1/K counts as no better than guessing (absorbs summation round-off)
STOP_TOL = 1e-12
# weighted errors closer than this are ties, resolved by the smallest element
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ElmParams:
    n_hidden: int = 50
    activation: str = "sigmoid"
    ridge: float = 0.0
    standardize: bool = True


def candidate_seed(master_seed, element: ElementId) -> int:
    return derive_seed(master_seed, f"elm:{element.kind}", element.rank)


def standardize_stack(X):
    """Z-score each column of every slice of ``X (E, n, D)``; constant columns become 0."""
    mean = X.mean(axis=1, keepdims=True)
    std = X.std(axis=1, keepdims=True)
    return (X - mean) / np.where(std > 0, std, 1.0)


@dataclass
class CandidateBank:
    """Training-set predictions of every candidate, shape ``(n, E)``."""

    elements: list
    predictions: np.ndarray
    excluded: list = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.predictions.shape[0]


def _as_chunks(candidates):
    if isinstance(candidates, Mapping):
        elements = list(candidates)
        if not elements:
            return []
        X = np.stack([np.asarray(candidates[e], dtype=np.float64) for e in elements])
        return [(elements, X, [])]
    return candidates


def _chunk_predictions(elements, X, labels, n_classes, params, master_seed, sample_weights=None):
    if params.standardize:
        X = standardize_stack(X)
    seeds = [candidate_seed(master_seed, e) for e in elements]
    return fit_predict_stack(X, labels, n_classes, seeds, params.n_hidden,
                             params.activation, params.ridge, sample_weights)


def train_candidates(candidates, labels, n_classes, params=ElmParams(), master_seed=0) -> CandidateBank:
    """Train one unweighted ELM per candidate and tabulate its training predictions.

    ``candidates`` maps each element to an ``(n, D)`` matrix, or is an
    iterable of ``(elements, X (E, n, D), excluded)`` chunks as produced by
    :func:`geofer.features.iter_candidate_features`.
    """
    labels = np.asarray(labels, dtype=np.intp)
    elements, columns, excluded = [], [], []
    for chunk_elements, X, chunk_excluded in _as_chunks(candidates):
        excluded.extend(chunk_excluded)
        if not chunk_elements:
            continue
        if X.shape[1] != len(labels):
            raise ValueError(f"candidate data has {X.shape[1]} samples, expected {len(labels)}")
        columns.append(_chunk_predictions(chunk_elements, X, labels, n_classes, params, master_seed))
        elements.extend(chunk_elements)
    if excluded:
        log.warning("%d candidates excluded (degenerate geometry)", len(excluded))
    if not elements:
        raise ValueError("no usable candidates")
    predictions = np.concatenate(columns, axis=0).T
    return CandidateBank(elements, np.ascontiguousarray(predictions), excluded)


@dataclass
class BoostResult:
    selected: tuple
    alphas: np.ndarray
    errors: np.ndarray
    K: int
    weight_history: list | None = None

    @property
    def M(self) -> int:
        return len(self.selected)

    def head(self, m) -> "BoostResult":
        """The first ``m`` rounds (boosting is greedy, so this equals an m-round run)."""
        hist = None if self.weight_history is None else self.weight_history[:m]
        return BoostResult(self.selected[:m], self.alphas[:m], self.errors[:m], self.K, hist)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["round", "kind", "i", "j", "k", "alpha", "err"])
        for r, (e, a, err) in enumerate(zip(self.selected, self.alphas, self.errors), 1):
            idx = list(e.indices) + [""] * (3 - len(e.indices))
            writer.writerow([r, e.kind, *idx, repr(float(a)), repr(float(err))])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"#K={self.K}\n")
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "BoostResult":
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
        K = None
        if lines and lines[0].startswith("#K="):
            K = int(lines[0][3:])
            lines = lines[1:]
        rows = list(csv.reader(lines))
        if not rows or rows[0] != ["round", "kind", "i", "j", "k", "alpha", "err"]:
            raise FormatError("expected header 'round,kind,i,j,k,alpha,err'", path)
        selected, alphas, errors = [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            try:
                idx = tuple(int(v) for v in row[2:5] if v != "")
                selected.append(ElementId(row[1], idx))
                alphas.append(float(row[5]))
                errors.append(float(row[6]))
            except (ValueError, IndexError) as exc:
                raise FormatError(f"bad selection row: {exc}", path, lineno) from None
        if K is None:
            raise FormatError("missing '#K=' line", path)
        return cls(tuple(selected), np.array(alphas), np.array(errors), K)


def _tie_order(elements, E):
    if elements is None:
        return np.arange(E)
    order = np.empty(E, dtype=np.intp)
    order[sorted(range(E), key=lambda c: elements[c])] = np.arange(E)
    return order


def _weighted_errors(missed_t, w):
    # row-wise sums over a contiguous (E, n) table: each candidate's error is
    # bitwise independent of where it sits in the candidate list
    return (missed_t * w).sum(axis=1) / w.sum()


def _pick(err, tie):
    """Index of the smallest error; near-equal errors go to the smallest tie rank."""
    tied = np.flatnonzero(err <= err.min() + TIE_TOL)
    return int(tied[np.argmin(tie[tied])])


def _alpha(err, K, eps=EPS):
    e = min(max(err, eps), 1.0 - eps)
    return float(np.log((1.0 - e) / e) + np.log(K - 1))


def samme_select(predictions, labels, M, K, elements=None, eps=EPS, keep_history=False) -> BoostResult:
    """Run SAMME over a fixed prediction table ``(n, E)`` for up to ``M`` rounds.

    Ties in weighted error go to the smallest element (or column index when
    ``elements`` is not given). Stops early, with a warning, once no remaining
    candidate beats random guessing (err >= 1 - 1/K).
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels, dtype=np.intp)
    if predictions.ndim != 2 or predictions.shape[1] == 0:
        raise ValueError("empty candidate set")
    n, E = predictions.shape
    if n < 1 or labels.shape != (n,):
        raise ValueError("labels must match the prediction table rows")
    if K < 2:
        raise ValueError("K >= 2 required")
    if M < 1:
        raise ValueError("M must be >= 1")
    if M > E:
        raise ValueError(f"M={M} exceeds the {E} available candidates")
    if elements is not None and len(elements) != E:
        raise ValueError("elements must label every prediction column")

    missed_t = np.ascontiguousarray((predictions != labels[:, None]).T, dtype=np.float64)
    tie = _tie_order(elements, E)
    available = np.ones(E, dtype=bool)
    w = np.full(n, 1.0 / n)
    chosen, alphas, errors, history = [], [], [], []
    for m in range(M):
        w = w / w.sum()
        if keep_history:
            history.append(w.copy())
        err = _weighted_errors(missed_t, w)
        err[~available] = np.inf
        best = _pick(err, tie)
        if err[best] >= 1.0 - 1.0 / K - STOP_TOL:
            warnings.warn(f"boosting stopped after {m} rounds: no candidate beats random guessing",
                          RuntimeWarning, stacklevel=2)
            break
        alpha = _alpha(float(err[best]), K, eps)
        w = w * np.exp(alpha * missed_t[best])
        available[best] = False
        chosen.append(best)
        alphas.append(alpha)
        errors.append(float(err[best]))
    selected = tuple(elements[c] for c in chosen) if elements is not None else tuple(chosen)
    return BoostResult(selected, np.array(alphas), np.array(errors), K,
                       history if keep_history else None)


def select_from_bank(bank: CandidateBank, labels, M, K, **kwargs) -> BoostResult:
    return samme_select(bank.predictions, labels, min(M, len(bank.elements)), K,
                        elements=bank.elements, **kwargs)


def samme_select_retrain(chunk_factory, labels, M, K, params=ElmParams(), master_seed=0,
                         eps=EPS) -> BoostResult:
    """SAMME variant that retrains every remaining candidate on the current weights each round.

    ``chunk_factory()`` must return a fresh iterable of
    ``(elements, X, excluded)`` chunks on every call.
    """
    labels = np.asarray(labels, dtype=np.intp)
    n = len(labels)
    w = np.full(n, 1.0 / n)
    taken = set()
    selected, alphas, errors = [], [], []
    for m in range(M):
        w = w / w.sum()
        pool, rows = [], []
        for elements, X, _ in chunk_factory():
            keep = [c for c, e in enumerate(elements) if e not in taken]
            if not keep:
                continue
            chunk = [elements[c] for c in keep]
            preds = _chunk_predictions(chunk, X[keep], labels, K, params, master_seed,
                                       sample_weights=w * n)
            pool.extend(chunk)
            rows.append(preds != labels[None, :])
        if not pool:
            if m == 0:
                raise ValueError("empty candidate set")
            break
        missed_t = np.concatenate(rows).astype(np.float64)
        err = _weighted_errors(missed_t, w)
        best = _pick(err, _tie_order(pool, len(pool)))
        if err[best] >= 1.0 - 1.0 / K - STOP_TOL:
            warnings.warn(f"boosting stopped after {m} rounds: no candidate beats random guessing",
                          RuntimeWarning, stacklevel=2)
            break
        alpha = _alpha(float(err[best]), K, eps)
        w = w * np.exp(alpha * missed_t[best])
        taken.add(pool[best])
        selected.append(pool[best])
        alphas.append(alpha)
        errors.append(float(err[best]))
    return BoostResult(tuple(selected), np.array(alphas), np.array(errors), K)


def strong_classify(result: BoostResult, predictions) -> int:
    """Alpha-weighted vote of the selected weak classifiers; ties go to the lowest category.

    ``predictions`` maps each selected element to its predicted category, or
    is a sequence aligned with ``result.selected``.
    """
    if isinstance(predictions, Mapping):
        missing = [e for e in result.selected if e not in predictions]
        if missing:
            raise KeyError(f"no prediction for selected element {missing[0]}")
        votes = [predictions[e] for e in result.selected]
    else:
        votes = list(predictions)
        if len(votes) != result.M:
            raise KeyError(f"expected {result.M} predictions, got {len(votes)}")
    score = np.zeros(result.K)
    for alpha, v in zip(result.alphas, votes):
        score[int(v)] += alpha
    return int(np.argmax(score))
