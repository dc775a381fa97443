"""Reading and writing landmark trajectory files and dataset manifests.

Sequence files are CSV with header ``frame,p0_x,p0_y,...,p{P-1}_x,p{P-1}_y``
and one row per frame. Manifests are CSV with header
``path,label,subject,dataset``; an optional first line ``#labels=a,b,...``
fixes the label order. Relative paths resolve against the manifest's folder.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, FormatError

DECIMALS = 6
MANIFEST_HEADER = ["path", "label", "subject", "dataset"]


@dataclass(frozen=True, eq=False)
class LandmarkSequence:
    """Tracked coordinates of one expression clip, shape ``(frames, P, 2)``."""

    points: np.ndarray
    source_id: str = ""
    label: str | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 3 or pts.shape[2] != 2:
            raise DatasetError(f"points must have shape (frames, P, 2), got {pts.shape}")
        if pts.shape[0] < 2:
            raise DatasetError("a sequence needs at least 2 frames")
        if pts.shape[1] < 1:
            raise DatasetError("a sequence needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise DatasetError("non-finite coordinate in sequence")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def frame_count(self) -> int:
        return self.points.shape[0]

    @property
    def point_count(self) -> int:
        return self.points.shape[1]

    def with_label(self, label):
        return LandmarkSequence(self.points, self.source_id, label)


def sequence_header(n_points):
    cols = ["frame"]
    for p in range(n_points):
        cols += [f"p{p}_x", f"p{p}_y"]
    return cols


def _parse_header(row, path):
    if not row or row[0] != "frame" or len(row) < 3 or len(row) % 2 != 1:
        raise FormatError("header must be 'frame,p0_x,p0_y,...'", path, 1)
    n_points = (len(row) - 1) // 2
    if row != sequence_header(n_points):
        raise FormatError("header columns out of order or misnamed", path, 1)
    return n_points


def load_sequence(path, label=None) -> LandmarkSequence:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty file", path, 1) from None
        n_points = _parse_header([c.strip() for c in header], path)
        width = 1 + 2 * n_points
        frames = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width:
                raise FormatError(f"expected {width} columns, found {len(row)}", path, lineno)
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise FormatError("non-numeric value", path, lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise FormatError("non-finite value", path, lineno)
            frames.append(values)
    if len(frames) < 2:
        raise FormatError(f"need at least 2 frames, found {len(frames)}", path)
    points = np.asarray(frames, dtype=np.float64).reshape(len(frames), n_points, 2)
    return LandmarkSequence(points, source_id=path.stem, label=label)


def format_sequence(seq: LandmarkSequence) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(sequence_header(seq.point_count))
    flat = seq.points.reshape(seq.frame_count, -1)
    for f, row in enumerate(flat):
        writer.writerow([f] + [f"{v:.{DECIMALS}f}" for v in row])
    return buf.getvalue()


def save_sequence(seq: LandmarkSequence, path) -> None:
    """Write ``seq`` as CSV; raises ``OSError`` if the path is not writable."""
    with open(path, "w", newline="") as fh:
        fh.write(format_sequence(seq))


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    subject: str = ""
    dataset: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    label_set: tuple[str, ...]
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        if not self.entries:
            raise DatasetError("manifest has no entries")
        if len(self.label_set) < 2:
            raise DatasetError(f"K >= 2 required, manifest has K={len(self.label_set)}")
        if len(set(self.label_set)) != len(self.label_set):
            raise DatasetError("duplicate label in label set")
        known = set(self.label_set)
        seen = set()
        for e in self.entries:
            if e.label not in known:
                raise DatasetError(f"label {e.label!r} of {e.path} not in label set")
            if e.path in seen:
                raise DatasetError(f"duplicate path {e.path}")
            seen.add(e.path)

    @property
    def n_classes(self) -> int:
        return len(self.label_set)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p


def parse_manifest(path) -> DatasetManifest:
    path = Path(path)
    lines = path.read_text().splitlines()
    declared = None
    start = 0
    if lines and lines[0].startswith("#labels="):
        declared = tuple(t.strip() for t in lines[0][len("#labels="):].split(",") if t.strip())
        start = 1
    rows = list(csv.reader(lines[start:]))
    if not rows or [c.strip() for c in rows[0]] != MANIFEST_HEADER:
        raise FormatError("manifest header must be 'path,label,subject,dataset'", path, start + 1)
    entries = []
    for lineno, row in enumerate(rows[1:], start=start + 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise FormatError(f"expected 4 columns, found {len(row)}", path, lineno)
        entries.append(ManifestEntry(*(c.strip() for c in row)))
    if not entries:
        raise DatasetError(f"{path}: no entries")
    if declared is None:
        label_set = tuple(sorted({e.label for e in entries}))
    else:
        label_set = declared
    return DatasetManifest(tuple(entries), label_set, root=path.parent)


def load_manifest(path):
    """Parse a manifest and load every sequence it references.

    Returns ``(manifest, sequences)``; each sequence carries its label.
    """
    manifest = parse_manifest(path)
    sequences = []
    for entry in manifest.entries:
        seq_path = manifest.resolve(entry)
        if not seq_path.is_file():
            raise DatasetError(f"missing sequence file {seq_path}")
        seq = load_sequence(seq_path, label=entry.label)
        sequences.append(seq)
    counts = {s.point_count for s in sequences}
    if len(counts) > 1:
        raise DatasetError(f"sequences disagree on point count: {sorted(counts)}")
    return manifest, sequences


def write_manifest(path, entries, label_set=None) -> None:
    buf = io.StringIO()
    if label_set is not None:
        buf.write("#labels=" + ",".join(label_set) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for e in entries:
        writer.writerow([e.path, e.label, e.subject, e.dataset])
    Path(path).write_text(buf.getvalue())
