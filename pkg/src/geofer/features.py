"""Point, line and triangle delta features.

Every feature is measured relative to the first (neutral) frame. Lines carry
length and direction of the vector from the lower to the higher landmark
index. Triangles ``(i, j, k)`` use ``i`` as apex: side ``a = |p_i p_j|``,
side ``b = |p_i p_k|``, the included angle between them at ``p_i`` and the
direction of ``p_i -> p_j``. All angle differences are wrapped to (-pi, pi].

Batch functions take normalized, resampled data of shape ``(n, N, P, 2)``
and element index arrays of shape ``(E, k)``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DegenerateGeometryError

KINDS = {"point": 1, "line": 2, "triangle": 3}
N_COMPONENTS = {"point": 2, "line": 2, "triangle": 4}
N_SUMMARY = {"point": 4, "line": 2, "triangle": 4}
POINT_STATS = ("dx_max", "dx_min", "dy_max", "dy_min")

# |p_j - p_i| below this (pixels) counts as coincident
MIN_LENGTH = 1e-9
# sin of the included angle below this counts as collinear
MIN_SINE = 1e-9


@dataclass(frozen=True, order=True)
class ElementId:
    kind: str
    indices: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown element kind {self.kind!r}")
        idx = tuple(int(i) for i in self.indices)
        if len(idx) != KINDS[self.kind]:
            raise ValueError(f"{self.kind} needs {KINDS[self.kind]} indices, got {idx}")
        if any(i < 0 for i in idx) or any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be non-negative and strictly increasing: {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def rank(self) -> int:
        """Colexicographic rank among elements of the same kind (independent of P)."""
        return sum(comb(v, t + 1) for t, v in enumerate(self.indices))

    def __str__(self):
        return f"{self.kind}:" + "-".join(map(str, self.indices))


def point(i):
    return ElementId("point", (i,))


def line(i, j):
    return ElementId("line", (i, j))


def triangle(i, j, k):
    return ElementId("triangle", (i, j, k))


def enumerate_elements(kind: str, n_points: int) -> list[ElementId]:
    """All candidate elements of ``kind`` in lexicographic order."""
    r = KINDS[kind]
    return [ElementId(kind, c) for c in itertools.combinations(range(n_points), r)]


def candidate_count(kind: str, n_points: int) -> int:
    return comb(n_points, KINDS[kind])


def wrap_angle(x):
    """Wrap angles into (-pi, pi]."""
    r = np.remainder(np.asarray(x, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    return np.where(r <= -np.pi, r + 2 * np.pi, r)


@dataclass(frozen=True, eq=False)
class DeltaFeature:
    element: ElementId
    per_frame: np.ndarray
    summary: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return self.per_frame.reshape(-1)


# ---------------------------------------------------------------- batch core

def _index_array(elements, kind):
    if len(elements) == 0:
        return np.zeros((0, KINDS[kind]), dtype=np.intp)
    return np.array([e.indices for e in elements], dtype=np.intp)


def _check_points(points, idx):
    if points.ndim != 4 or points.shape[-1] != 2:
        raise ValueError(f"expected points of shape (n, N, P, 2), got {points.shape}")
    if points.shape[1] < 2:
        raise ValueError("need at least 2 frames")
    if idx.size and idx.max() >= points.shape[2]:
        raise IndexError(f"landmark index {idx.max()} out of range for P={points.shape[2]}")


def pair_tables(points):
    """Per-frame length and direction of every ordered pair, each ``(P, P, n, N)``.

    Entry ``[i, j]`` describes the vector from landmark i to landmark j. The
    landmark axes come first so that gathering many elements reads
    contiguous blocks.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).transpose(2, 0, 1, 3))
    v = pts[None, :] - pts[:, None]
    return np.hypot(v[..., 0], v[..., 1]), np.arctan2(v[..., 1], v[..., 0])


def line_components(tables, idx):
    """Length and direction per frame, each ``(E, n, N)``; plus a coincidence mask ``(E,)``."""
    length, direction = tables
    d = length[idx[:, 0], idx[:, 1]]
    theta = direction[idx[:, 0], idx[:, 1]]
    bad = (d <= MIN_LENGTH).any(axis=(1, 2))
    return d, theta, bad


def triangle_components(tables, idx):
    """Sides a, b, included angle and base direction per frame, ``(E, n, N, 4)``.

    The apex is the first index. The included angle is the absolute wrapped
    difference between the directions of the two sides leaving the apex.
    """
    length, direction = tables
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    a = length[i, j]
    b = length[i, k]
    beta = direction[i, j]
    alpha = np.abs(wrap_angle(direction[i, k] - beta))
    bad = (a <= MIN_LENGTH) | (b <= MIN_LENGTH) | ~(np.sin(alpha) > MIN_SINE)
    return np.stack([a, b, alpha, beta], axis=-1), bad.any(axis=(1, 2))


def element_deltas(points, elements, kind=None, tables=None):
    """Per-frame deltas in element-major layout ``(E, n, N-1, C)`` and a degeneracy mask ``(E,)``.

    ``tables`` may carry a precomputed :func:`pair_tables` result for ``points``.
    """
    points = np.asarray(points, dtype=np.float64)
    if kind is None:
        kind = elements[0].kind
    idx = _index_array(elements, kind)
    _check_points(points, idx)
    if kind == "point":
        xy = points.transpose(2, 0, 1, 3)[idx[:, 0]]          # (E, n, N, 2)
        return xy[:, :, 1:] - xy[:, :, :1], np.zeros(len(idx), dtype=bool)
    if tables is None:
        tables = pair_tables(points)
    if kind == "line":
        d, theta, bad = line_components(tables, idx)
        deltas = np.stack([d[:, :, 1:] - d[:, :, :1],
                           wrap_angle(theta[:, :, 1:] - theta[:, :, :1])], axis=-1)
        return deltas, bad
    comps, bad = triangle_components(tables, idx)
    deltas = comps[:, :, 1:] - comps[:, :, :1]
    deltas[..., 2:] = wrap_angle(deltas[..., 2:])
    return deltas, bad


def batch_deltas(points, elements, kind=None, tables=None):
    """Per-frame deltas ``(n, E, N-1, C)`` and a degeneracy mask ``(E,)``."""
    deltas, bad = element_deltas(points, elements, kind, tables)
    return np.ascontiguousarray(deltas.transpose(1, 0, 2, 3)), bad


def summarize(deltas, kind):
    """Summary values ``(..., S)`` from per-frame deltas ``(..., N-1, C)``."""
    if kind == "point":
        dx, dy = deltas[..., 0], deltas[..., 1]
        return np.stack([dx.max(-1), dx.min(-1), dy.max(-1), dy.min(-1)], axis=-1)
    return np.abs(deltas).max(axis=-2)


# ---------------------------------------------------------- single elements

def _as_points(seq):
    pts = seq.points if hasattr(seq, "points") else np.asarray(seq, dtype=np.float64)
    return np.asarray(pts, dtype=np.float64)[None]


def _single(seq, element):
    pts = _as_points(seq)
    if max(element.indices) >= pts.shape[2]:
        raise IndexError(f"{element} out of range for P={pts.shape[2]}")
    deltas, bad = batch_deltas(pts, [element])
    if bad[0]:
        what = "coincident points" if element.kind == "line" else "degenerate triangle"
        raise DegenerateGeometryError(f"{element}: {what}, angle undefined")
    per_frame = deltas[0, 0]
    return DeltaFeature(element, per_frame, summarize(per_frame, element.kind))


def point_delta(seq, i) -> DeltaFeature:
    return _single(seq, point(i))


def line_delta(seq, i, j) -> DeltaFeature:
    return _single(seq, line(i, j))


def triangle_delta(seq, i, j, k) -> DeltaFeature:
    return _single(seq, triangle(i, j, k))


# --------------------------------------------------------------- assembling

def component_keys(element: ElementId) -> list[tuple]:
    """Identity of each summary value, used to drop shared components."""
    idx = element.indices
    if element.kind == "point":
        return [("point", idx[0], s) for s in POINT_STATS]
    if element.kind == "line":
        i, j = idx
        return [("length", i, j), ("direction", i, j)]
    i, j, k = idx
    return [("length", i, j), ("length", i, k), ("angle", i, j, k), ("direction", i, j)]


def key_to_str(key) -> str:
    if key[0] == "point":
        return f"point:{key[1]}:{key[2]}"
    return f"{key[0]}:" + "-".join(str(v) for v in key[1:])


@dataclass(frozen=True, eq=False)
class AssembledVector:
    values: np.ndarray
    component_keys: tuple


def assembly_plan(elements):
    """Distinct component keys in first-seen order with their (element, slot) source."""
    keys, sources, seen = [], [], set()
    for e_pos, element in enumerate(elements):
        for slot, key in enumerate(component_keys(element)):
            if key not in seen:
                seen.add(key)
                keys.append(key)
                sources.append((e_pos, slot))
    return tuple(keys), sources


def assemble(features) -> AssembledVector:
    """Concatenate summaries, keeping one value per distinct component key."""
    keys, sources = assembly_plan([f.element for f in features])
    values = np.array([features[e].summary[s] for e, s in sources], dtype=np.float64)
    return AssembledVector(values, keys)


def feature_matrix(points, elements, chunk_size=2048):
    """Deduplicated summary matrix ``(n, D)`` and its component keys.

    Raises :class:`DegenerateGeometryError` if any element is degenerate in
    any sequence.
    """
    points = np.asarray(points, dtype=np.float64)
    kind = elements[0].kind
    keys, sources = assembly_plan(elements)
    tables = None if kind == "point" else pair_tables(points)
    summaries = np.empty((len(elements), points.shape[0], N_SUMMARY[kind]))
    for start in range(0, len(elements), chunk_size):
        chunk = elements[start:start + chunk_size]
        deltas, bad = element_deltas(points, chunk, kind, tables)
        if bad.any():
            raise DegenerateGeometryError(
                f"{chunk[int(np.argmax(bad))]}: degenerate geometry, angle undefined")
        summaries[start:start + len(chunk)] = summarize(deltas, kind)
    e_pos = np.array([e for e, _ in sources], dtype=np.intp)
    slot = np.array([s for _, s in sources], dtype=np.intp)
    return summaries[e_pos, :, slot].T, keys


def point_feature_matrix(points):
    """All-point summary matrix ``(n, 4P)``."""
    return feature_matrix(points, enumerate_elements("point", np.shape(points)[2]))


def iter_candidate_features(points, elements, representation="deltas", chunk_size=512):
    """Yield ``(elements, X, excluded)`` chunks for weak-learner training.

    ``X`` has shape ``(len(elements), n, D)``: flattened per-frame deltas
    (``"deltas"``) or summaries (``"summary"``). Elements degenerate in any
    sequence are left out and listed in ``excluded`` as ``(element, reason)``.
    """
    if representation not in ("deltas", "summary"):
        raise ValueError(f"unknown representation {representation!r}")
    points = np.asarray(points, dtype=np.float64)
    kind = elements[0].kind if len(elements) else "point"
    tables = None if kind == "point" else pair_tables(points)
    for start in range(0, len(elements), chunk_size):
        chunk = list(elements[start:start + chunk_size])
        deltas, bad = element_deltas(points, chunk, kind, tables)
        excluded = [(e, "degenerate geometry") for e, b in zip(chunk, bad) if b]
        keep = np.flatnonzero(~bad)
        deltas = deltas[keep]
        if representation == "summary":
            X = summarize(deltas, kind)
        else:
            X = deltas.reshape(deltas.shape[0], deltas.shape[1], -1)
        yield [chunk[i] for i in keep], np.ascontiguousarray(X), excluded


def write_feature_csv(path, matrix, keys, row_ids, labels=None) -> None:
    """Feature matrix as CSV: ``id,label`` then one column per component key."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label"] + [key_to_str(k) for k in keys])
        for r, row in enumerate(np.asarray(matrix)):
            label = "" if labels is None else labels[r]
            writer.writerow([row_ids[r], label] + [repr(float(v)) for v in row])
