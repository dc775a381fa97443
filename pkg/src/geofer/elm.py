"""Extreme learning machine: random hidden layer, least-squares output layer.

Hidden weights and biases are drawn uniformly from [-1, 1]; output weights
are ``pinv(H) @ T`` for one-hot targets ``T``. Optional sample weights scale
the rows of ``H`` and ``T`` by their square roots (weighted least squares).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import FormatError
from .serialization import write_npz

RCOND = 1e-10
FORMAT_NAME = "geofer-elm"
FORMAT_VERSION = 1


def pseudoinverse(M, rcond=RCOND):
    """Moore-Penrose inverse via SVD; works on stacks ``(..., n, m)``.

    Singular values at or below ``rcond * sigma_max`` are treated as zero.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim < 2:
        raise ValueError("pseudoinverse needs a matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("pseudoinverse of a matrix with non-finite entries")
    if M.shape[-1] == 0 or M.shape[-2] == 0:
        return np.zeros(M.shape[:-2] + (M.shape[-1], M.shape[-2]))
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    cutoff = rcond * s[..., :1]
    with np.errstate(divide="ignore"):
        s_inv = np.where(s > cutoff, 1.0 / s, 0.0)
    return np.swapaxes(vt, -1, -2) @ (s_inv[..., :, None] * np.swapaxes(u, -1, -2))


ACTIVATIONS = {
    "sigmoid": expit,
    "tanh": np.tanh,
    "relu": lambda z: np.maximum(z, 0.0),
    "identity": lambda z: z,
}


def _activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


def random_hidden(seed, n_hidden, n_features):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1.0, 1.0, size=(n_hidden, n_features))
    b = rng.uniform(-1.0, 1.0, size=n_hidden)
    return w, b


def hidden_output(X, input_weights, biases, activation="sigmoid"):
    """``g(X W^T + b)``; also accepts stacks ``X (E, n, D)``, ``W (E, L, D)``, ``b (E, L)``."""
    z = X @ np.swapaxes(input_weights, -1, -2) + biases[..., None, :]
    return _activation(activation)(z)


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.intp)
    T = np.zeros((len(labels), n_classes))
    T[np.arange(len(labels)), labels] = 1.0
    return T


def _solve_output(H, T, ridge):
    if ridge > 0:
        Ht = np.swapaxes(H, -1, -2)
        eye = np.eye(H.shape[-1])
        return np.linalg.solve(Ht @ H + ridge * eye, Ht @ T)
    # pinv(H) @ T without materializing pinv(H): V diag(1/s) (U^T T)
    u, s, vt = np.linalg.svd(H, full_matrices=False)
    with np.errstate(divide="ignore"):
        s_inv = np.where(s > RCOND * s[..., :1], 1.0 / s, 0.0)
    return np.swapaxes(vt, -1, -2) @ (s_inv[..., :, None] * (np.swapaxes(u, -1, -2) @ T))


@dataclass(frozen=True, eq=False)
class ElmModel:
    input_weights: np.ndarray
    biases: np.ndarray
    output_weights: np.ndarray
    activation: str = "sigmoid"
    seed: int = 0
    ridge: float = 0.0

    @property
    def n_hidden(self) -> int:
        return self.input_weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.input_weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.output_weights.shape[1]

    def hidden(self, X):
        return hidden_output(np.atleast_2d(np.asarray(X, dtype=np.float64)),
                             self.input_weights, self.biases, self.activation)


def _check_labels(labels, n, n_classes):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integer category indices")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels outside 0..{n_classes - 1}")
    return labels.astype(np.intp), n_classes


def _check_weights(sample_weights, n):
    w = np.asarray(sample_weights, dtype=np.float64)
    if w.shape != (n,) or not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise ValueError("sample_weights must be n positive finite values")
    return w


def train_elm(X, labels, n_hidden=50, seed=0, sample_weights=None, n_classes=None,
              activation="sigmoid", ridge=0.0) -> ElmModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    if n < 1 or d < 1:
        raise ValueError("training data is empty")
    if n_hidden < 1:
        raise ValueError("n_hidden must be >= 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite training data")
    labels, n_classes = _check_labels(labels, n, n_classes)
    W, b = random_hidden(seed, n_hidden, d)
    H = hidden_output(X, W, b, activation)
    T = one_hot(labels, n_classes)
    if sample_weights is not None:
        root = np.sqrt(_check_weights(sample_weights, n))[:, None]
        H, T = H * root, T * root
    beta = _solve_output(H, T, ridge)
    return ElmModel(W, b, beta, activation, int(seed), float(ridge))


def elm_scores(model: ElmModel, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return model.hidden(X) @ model.output_weights


def elm_predict(model: ElmModel, x):
    """Category (argmax, lowest index on ties) and the K scores for one input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("elm_predict takes a single vector; use elm_predict_batch")
    scores = elm_scores(model, x[None])[0]
    return int(np.argmax(scores)), scores


def elm_predict_batch(model: ElmModel, X):
    scores = elm_scores(model, X)
    return np.argmax(scores, axis=1), scores


def fit_predict_stack(X, labels, n_classes, seeds, n_hidden=50, activation="sigmoid",
                      ridge=0.0, sample_weights=None):
    """Train one ELM per slice of ``X (E, n, D)`` and return training predictions ``(E, n)``.

    Slice ``e`` uses ``seeds[e]``; results match :func:`train_elm` called per slice.
    """
    X = np.asarray(X, dtype=np.float64)
    E, n, d = X.shape
    W = np.empty((E, n_hidden, d))
    b = np.empty((E, n_hidden))
    for e, seed in enumerate(seeds):
        W[e], b[e] = random_hidden(int(seed), n_hidden, d)
    H = hidden_output(X, W, b, activation)
    T = one_hot(labels, n_classes)
    if sample_weights is None:
        beta = _solve_output(H, T, ridge)
    else:
        root = np.sqrt(_check_weights(sample_weights, n))[:, None]
        beta = _solve_output(H * root, T * root, ridge)
    return np.argmax(H @ beta, axis=-1)


def save_elm(model: ElmModel, path) -> None:
    meta = {
        "format": FORMAT_NAME, "version": FORMAT_VERSION,
        "activation": model.activation, "seed": model.seed, "ridge": model.ridge,
        "n_hidden": model.n_hidden, "n_features": model.n_features, "n_classes": model.n_classes,
    }
    write_npz(path, {"meta": np.array(json.dumps(meta, sort_keys=True)),
                     "input_weights": model.input_weights, "biases": model.biases,
                     "output_weights": model.output_weights})


def load_elm(path) -> ElmModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT_NAME or meta.get("version") != FORMAT_VERSION:
            raise FormatError(f"not a {FORMAT_NAME} v{FORMAT_VERSION} file", path)
        return ElmModel(data["input_weights"], data["biases"], data["output_weights"],
                        meta["activation"], meta["seed"], meta["ridge"])
