"""RBF-kernel soft-margin SVM, one-vs-one multi-class, with grid search.

Each binary dual

    min_a  1/2 a^T Q a - sum(a)   s.t.  y^T a = 0,  0 <= a_i <= C,
    Q_ij = y_i y_j K(x_i, x_j)

is solved by sequential minimal optimization with second-order working-set
selection, stopping once the maximal KKT violation drops below ``tol``.
Features are scaled to [-1, 1] per dimension using the training range.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DatasetError, FormatError
from .metrics import ConfusionMatrix, macro_accuracy, stratified_folds
from .serialization import write_npz

TAU = 1e-12
DEFAULT_TOL = 1e-3
MAX_ITER = 10_000_000
FORMAT_NAME = "geofer-svm"
FORMAT_VERSION = 1

DEFAULT_C_GRID = tuple(2.0 ** e for e in range(-5, 16, 2))
DEFAULT_GAMMA_GRID = tuple(2.0 ** e for e in range(-15, 4, 2))


@njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if y[t] > 0:
                if alpha[t] < C and -G[t] > gmax:
                    gmax = -G[t]
                    i = t
            else:
                if alpha[t] > 0 and G[t] > gmax:
                    gmax = G[t]
                    i = t
        # j: best second-order decrease among I_low
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if y[t] > 0:
                if alpha[t] > 0:
                    if G[t] > gmax2:
                        gmax2 = G[t]
                    diff = gmax + G[t]
                    if diff > 0 and i >= 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj < best:
                            best = obj
                            j = t
            else:
                if alpha[t] < C:
                    if -G[t] > gmax2:
                        gmax2 = -G[t]
                    diff = gmax - G[t]
                    if diff > 0 and i >= 0:
                        quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj < best:
                            best = obj
                            j = t
        if i < 0 or j < 0 or gmax + gmax2 < tol:
            break
        it += 1

        old_i = alpha[i]
        old_j = alpha[j]
        Qij = y[i] * y[j] * K[i, j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        d_i = alpha[i] - old_i
        d_j = alpha[j] - old_j
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * d_i + y[j] * K[t, j] * d_j)

    # bias: mean of y*G over free variables, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    n_free = 0
    sum_free = 0.0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            sum_free += yg
    if n_free > 0:
        rho = sum_free / n_free
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it


def solve_binary(K, y, C, tol=DEFAULT_TOL, max_iter=MAX_ITER):
    """Solve one binary dual on a precomputed kernel; returns ``(alpha, rho)``.

    The decision function is ``f(x) = sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if C <= 0:
        raise ValueError("C must be > 0")
    alpha, rho, it = _smo(K, y, float(C), float(tol), int(max_iter))
    if it >= max_iter:
        warnings.warn("SMO reached the iteration limit before KKT tolerance", RuntimeWarning)
    return alpha, float(rho)


def dual_objective(alpha, y, K) -> float:
    """Dual objective ``sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij`` (to be maximized)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def kkt_residual(alpha, rho, y, K, C) -> float:
    """Largest KKT violation of a binary solution, in margin units.

    Free coefficients must sit on the margin (``y f = 1``), zero ones outside
    it (``y f >= 1``) and bounded ones inside (``y f <= 1``). Also checks
    the box and equality constraints.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    margin = y * (K @ (alpha * y) - rho)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    worst = 0.0
    if free.any():
        worst = max(worst, float(np.max(np.abs(margin[free] - 1.0))))
    if at_zero.any():
        worst = max(worst, float(np.max(1.0 - margin[at_zero])))
    if at_c.any():
        worst = max(worst, float(np.max(margin[at_c] - 1.0)))
    worst = max(worst, float(np.max(-alpha)), float(np.max(alpha - C)), abs(float(alpha @ y)))
    return worst


def rbf_kernel(A, B, gamma):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass(frozen=True, eq=False)
class BinaryMachine:
    """Classes ``(a, b)``; ``f > 0`` votes for ``a``. Indices point into the SV table."""

    a: int
    b: int
    sv: np.ndarray
    alpha: np.ndarray
    y: np.ndarray
    rho: float

    @property
    def coef(self):
        return self.alpha * self.y


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: np.ndarray
    machines: tuple
    C: float
    gamma: float
    n_classes: int
    scale_min: np.ndarray
    scale_max: np.ndarray
    label_set: tuple = field(default=())

    def scale(self, X):
        return scale_features(X, self.scale_min, self.scale_max)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        save_svm(self, buf)
        return buf.getvalue()


def fit_scaler(X):
    X = np.asarray(X, dtype=np.float64)
    return X.min(axis=0), X.max(axis=0)


def scale_features(X, lo, hi):
    X = np.asarray(X, dtype=np.float64)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, -1.0 + 2.0 * (X - lo) / safe, 0.0)


def _fit_ovo_kernel(Kfull, labels, n_classes, C, tol):
    """Train all pairwise machines; ``sv`` indices point into the training rows."""
    machines = []
    present = [c for c in range(n_classes) if np.any(labels == c)]
    for ai, a in enumerate(present):
        for b in present[ai + 1:]:
            rows = np.flatnonzero((labels == a) | (labels == b))
            y = np.where(labels[rows] == a, 1.0, -1.0)
            alpha, rho = solve_binary(Kfull[np.ix_(rows, rows)], y, C, tol)
            nz = alpha > 0
            machines.append(BinaryMachine(a, b, rows[nz], alpha[nz], y[nz], rho))
    return machines


def _vote(machines, Kx, n_classes):
    """Majority vote from kernel values ``Kx (m, n_sv)``; ties go to the lowest class."""
    votes = np.zeros((Kx.shape[0], n_classes), dtype=np.int64)
    rows = np.arange(Kx.shape[0])
    for mach in machines:
        f = Kx[:, mach.sv] @ mach.coef - mach.rho
        winner = np.where(f > 0, mach.a, mach.b)
        votes[rows, winner] += 1
    return np.argmax(votes, axis=1)


def _check_xy(X, labels):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integer category indices")
    if labels.shape != (X.shape[0],):
        raise ValueError("one label per row required")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    return X, labels.astype(np.intp)


def train_svm(X, labels, C=1.0, gamma=1.0, n_classes=None, tol=DEFAULT_TOL, label_set=()) -> SvmModel:
    X, labels = _check_xy(X, labels)
    if C <= 0 or gamma <= 0:
        raise ValueError("C and gamma must be > 0")
    if len(np.unique(labels)) < 2:
        raise DatasetError("training data must contain at least 2 categories")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    lo, hi = fit_scaler(X)
    Xs = scale_features(X, lo, hi)
    K = rbf_kernel(Xs, Xs, gamma)
    machines = _fit_ovo_kernel(K, labels, n_classes, C, tol)
    used = np.unique(np.concatenate([m.sv for m in machines]))
    remap = np.full(len(X), -1, dtype=np.intp)
    remap[used] = np.arange(len(used))
    machines = tuple(BinaryMachine(m.a, m.b, remap[m.sv], m.alpha, m.y, m.rho) for m in machines)
    return SvmModel(Xs[used], machines, float(C), float(gamma), int(n_classes), lo, hi,
                    tuple(label_set))


def decision_values(model: SvmModel, X):
    """Pairwise decision values ``(m, n_machines)`` in machine order."""
    Xs = model.scale(np.atleast_2d(X))
    Kx = rbf_kernel(Xs, model.support_vectors, model.gamma)
    return np.stack([Kx[:, m.sv] @ m.coef - m.rho for m in model.machines], axis=1)


def svm_predict_batch(model: SvmModel, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.scale_min.shape[0]:
        raise ValueError(f"expected {model.scale_min.shape[0]} features, got {X.shape[1]}")
    Kx = rbf_kernel(model.scale(X), model.support_vectors, model.gamma)
    return _vote(model.machines, Kx, model.n_classes)


def svm_predict(model: SvmModel, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("svm_predict takes a single vector; use svm_predict_batch")
    return int(svm_predict_batch(model, x[None])[0])


@dataclass
class GridSearchResult:
    C: float
    gamma: float
    table: np.ndarray          # CV macro accuracy, rows = C, columns = gamma
    c_grid: tuple
    gamma_grid: tuple

    @property
    def best_accuracy(self) -> float:
        return float(np.nanmax(self.table)) if np.isfinite(self.table).any() else float("nan")


def grid_search(X, labels, c_grid=DEFAULT_C_GRID, gamma_grid=DEFAULT_GAMMA_GRID, folds=5,
                seed=0, n_classes=None, tol=DEFAULT_TOL) -> GridSearchResult:
    """Stratified cross-validated macro accuracy for every ``(C, gamma)``.

    Returns the maximizer; ties prefer the smaller C, then the smaller gamma.
    A single-cell grid is returned as is, without cross-validation.
    """
    X, labels = _check_xy(X, labels)
    c_grid = tuple(sorted(float(c) for c in c_grid))
    gamma_grid = tuple(sorted(float(g) for g in gamma_grid))
    if not c_grid or not gamma_grid:
        raise ValueError("grids must be non-empty")
    if len(c_grid) == 1 and len(gamma_grid) == 1:
        return GridSearchResult(c_grid[0], gamma_grid[0], np.full((1, 1), np.nan), c_grid, gamma_grid)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    fold = stratified_folds(labels, folds, seed)
    predictions = np.empty((len(c_grid), len(gamma_grid), len(labels)), dtype=np.intp)
    for f in range(folds):
        train = np.flatnonzero(fold != f)
        test = np.flatnonzero(fold == f)
        lo, hi = fit_scaler(X[train])
        Xtr = scale_features(X[train], lo, hi)
        Xte = scale_features(X[test], lo, hi)
        for gi, gamma in enumerate(gamma_grid):
            Ktr = rbf_kernel(Xtr, Xtr, gamma)
            Kte = rbf_kernel(Xte, Xtr, gamma)
            for ci, C in enumerate(c_grid):
                machines = _fit_ovo_kernel(Ktr, labels[train], n_classes, C, tol)
                predictions[ci, gi, test] = _vote(machines, Kte, n_classes)
    label_set = tuple(range(n_classes))
    table = np.empty((len(c_grid), len(gamma_grid)))
    present = np.unique(labels)
    for ci in range(len(c_grid)):
        for gi in range(len(gamma_grid)):
            cm = ConfusionMatrix.from_predictions(labels, predictions[ci, gi], label_set)
            table[ci, gi] = macro_accuracy(cm.rates[present][:, present])
    best = (0, 0)
    for ci in range(len(c_grid)):
        for gi in range(len(gamma_grid)):
            if table[ci, gi] > table[best]:
                best = (ci, gi)
    return GridSearchResult(c_grid[best[0]], gamma_grid[best[1]], table, c_grid, gamma_grid)


def save_svm(model: SvmModel, target) -> None:
    """Write a model as ``.npz``: a JSON header plus flat arrays for every machine."""
    meta = {
        "format": FORMAT_NAME, "version": FORMAT_VERSION, "kernel": "rbf",
        "C": model.C, "gamma": model.gamma, "n_classes": model.n_classes,
        "label_set": list(model.label_set),
        "machines": [{"a": m.a, "b": m.b, "rho": m.rho} for m in model.machines],
    }
    arrays = {
        "meta": np.array(json.dumps(meta, sort_keys=True)),
        "support_vectors": model.support_vectors,
        "scale_min": model.scale_min,
        "scale_max": model.scale_max,
    }
    for k, m in enumerate(model.machines):
        arrays[f"m{k}_sv"] = m.sv
        arrays[f"m{k}_alpha"] = m.alpha
        arrays[f"m{k}_y"] = m.y
    write_npz(target, arrays)


def load_svm(source) -> SvmModel:
    with np.load(source, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT_NAME or meta.get("version") != FORMAT_VERSION:
            raise FormatError(f"not a {FORMAT_NAME} v{FORMAT_VERSION} file", source)
        machines = tuple(
            BinaryMachine(m["a"], m["b"], data[f"m{k}_sv"], data[f"m{k}_alpha"], data[f"m{k}_y"], m["rho"])
            for k, m in enumerate(meta["machines"]))
        return SvmModel(data["support_vectors"], machines, meta["C"], meta["gamma"],
                        meta["n_classes"], data["scale_min"], data["scale_max"],
                        tuple(meta["label_set"]))
