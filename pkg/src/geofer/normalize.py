"""Face-graph normalization and fixed-length temporal resampling.

Each clip is scaled so that the first-frame distance between two reference
landmarks equals ``scale_reference``, then every point is shifted by the
offset that moves its first-frame position onto the dataset's mean neutral
graph. The same offset applies to all frames, so motion is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError, DegenerateGeometryError, FormatError
from .landmark_io import LandmarkSequence
from .template import EYE_CENTERS

DEFAULT_SCALE_REFERENCE = 60.0


def default_reference(n_points):
    """Eye centers for the 52-point scheme; no scaling otherwise."""
    return EYE_CENTERS if n_points == 52 else None


@dataclass(frozen=True, eq=False)
class MeanFaceGraph:
    """Mean neutral graph ``mu`` of shape ``(P, 2)``.

    ``reference`` names the two landmarks whose first-frame distance is set
    to ``scale_reference``; ``None`` disables scaling.
    """

    mu: np.ndarray
    scale_reference: float = DEFAULT_SCALE_REFERENCE
    reference: tuple[int, int] | None = None

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        if mu.ndim != 2 or mu.shape[1] != 2:
            raise DatasetError(f"mean graph must have shape (P, 2), got {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise DatasetError("non-finite mean graph coordinate")
        if not self.scale_reference > 0:
            raise DatasetError("scale_reference must be > 0")
        if self.reference is not None:
            i, j = self.reference
            if i == j or not (0 <= i < len(mu) and 0 <= j < len(mu)):
                raise DatasetError(f"invalid reference landmarks {self.reference}")
            object.__setattr__(self, "reference", (int(i), int(j)))
        mu.flags.writeable = False
        object.__setattr__(self, "mu", mu)

    @property
    def point_count(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class NormalizedSequence:
    points: np.ndarray
    source_id: str = ""
    label: str | None = None

    @property
    def frame_count(self) -> int:
        return self.points.shape[0]

    @property
    def point_count(self) -> int:
        return self.points.shape[1]


def _points(seq):
    return seq.points if hasattr(seq, "points") else np.asarray(seq, dtype=np.float64)


def _scale_factor(first_frame, reference, scale_reference):
    if reference is None:
        return 1.0
    i, j = reference
    d0 = float(np.hypot(*(first_frame[i] - first_frame[j])))
    if not d0 > 0:
        raise DegenerateGeometryError(
            f"reference landmarks {i} and {j} coincide in the first frame")
    return scale_reference / d0


def compute_mean_graph(sequences, scale_reference=DEFAULT_SCALE_REFERENCE,
                       reference="default") -> MeanFaceGraph:
    """Average first frame over ``sequences`` after per-sequence scaling."""
    if len(sequences) == 0:
        raise DatasetError("cannot compute a mean graph from an empty dataset")
    first = [_points(s)[0] for s in sequences]
    n_points = {f.shape[0] for f in first}
    if len(n_points) != 1:
        raise DatasetError(f"sequences disagree on point count: {sorted(n_points)}")
    (P,) = n_points
    if reference == "default":
        reference = default_reference(P)
    total = np.zeros((P, 2))
    for f in first:
        total += _scale_factor(f, reference, scale_reference) * f
    return MeanFaceGraph(total / len(first), scale_reference, reference)


def normalize_sequence(seq, mean: MeanFaceGraph) -> NormalizedSequence:
    pts = _points(seq)
    if pts.shape[1] != mean.point_count:
        raise DatasetError(
            f"sequence has {pts.shape[1]} points, mean graph has {mean.point_count}")
    s = _scale_factor(pts[0], mean.reference, mean.scale_reference)
    scaled = s * pts
    # mu + (x_l - x_0) is the first-frame offset added to every frame,
    # written so that frame 0 lands on mu exactly.
    out = mean.mu[None, :, :] + (scaled - scaled[0][None, :, :])
    return NormalizedSequence(out, getattr(seq, "source_id", ""), getattr(seq, "label", None))


def resample_points(points: np.ndarray, n_target: int) -> np.ndarray:
    """Linear interpolation of a ``(frames, ...)`` array to ``n_target`` frames."""
    if n_target < 2:
        raise ValueError("n_target must be >= 2")
    points = np.asarray(points, dtype=np.float64)
    n_in = points.shape[0]
    if n_in < 2:
        raise ValueError("need at least 2 input frames")
    if n_in == n_target:
        return points.copy()
    pos = np.arange(n_target) * (n_in - 1) / (n_target - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = (pos - lo).reshape((-1,) + (1,) * (points.ndim - 1))
    return (1.0 - frac) * points[lo] + frac * points[lo + 1]


def resample(seq, n_target: int):
    if isinstance(seq, (NormalizedSequence, LandmarkSequence)):
        return NormalizedSequence(resample_points(seq.points, n_target), seq.source_id, seq.label)
    return resample_points(seq, n_target)


def normalize_dataset(sequences, mean: MeanFaceGraph, n_frames: int) -> np.ndarray:
    """Normalize and resample every sequence; returns ``(n, n_frames, P, 2)``."""
    out = np.empty((len(sequences), n_frames, mean.point_count, 2))
    for k, seq in enumerate(sequences):
        out[k] = resample_points(normalize_sequence(seq, mean).points, n_frames)
    return out


def format_mean_graph(mean: MeanFaceGraph) -> str:
    ref = "none" if mean.reference is None else f"{mean.reference[0]},{mean.reference[1]}"
    lines = [f"# scale_reference={mean.scale_reference!r} reference={ref}", "point,mu_x,mu_y"]
    lines += [f"{p},{x!r},{y!r}" for p, (x, y) in enumerate(mean.mu.tolist())]
    return "\n".join(lines) + "\n"


def save_mean_graph(mean: MeanFaceGraph, path) -> None:
    Path(path).write_text(format_mean_graph(mean))


def load_mean_graph(path) -> MeanFaceGraph:
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 3 or not lines[0].startswith("#"):
        raise FormatError("missing mean graph header", path, 1)
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    try:
        scale = float(meta["scale_reference"])
        ref = None if meta["reference"] == "none" else tuple(int(t) for t in meta["reference"].split(","))
    except (KeyError, ValueError):
        raise FormatError("bad mean graph header", path, 1) from None
    if lines[1].strip() != "point,mu_x,mu_y":
        raise FormatError("expected 'point,mu_x,mu_y'", path, 2)
    mu = []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split(",")
        if len(parts) != 3 or int(parts[0]) != len(mu):
            raise FormatError("bad mean graph row", path, lineno)
        mu.append((float(parts[1]), float(parts[2])))
    return MeanFaceGraph(np.array(mu), scale, ref)
