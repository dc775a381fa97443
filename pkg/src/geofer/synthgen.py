"""Deterministic synthetic expression trajectories.

A clip starts from the neutral template, moves along its category's
displacement field with a raised-cosine onset-to-apex ramp, gets i.i.d.
Gaussian tracking noise, and is finally translated and scaled as a whole
to mimic differences in head position and image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import derive_seed
from .errors import ConfigError
from .landmark_io import LandmarkSequence, ManifestEntry, save_sequence, write_manifest
from .template import MOUTH_CORNERS, NEUTRAL_52, resolve_subset

EXPRESSIONS = ("anger", "disgust", "fear", "happiness", "sadness", "surprise")

_BROW_L = range(0, 5)
_BROW_R = range(5, 10)


def _field(moves):
    f = np.zeros((52, 2))
    for idx, (dx, dy) in moves:
        for i in ([idx] if isinstance(idx, int) else idx):
            f[i] += (dx, dy)
    return f


# apex displacement (pixels, y down) for each expression on the 52-point layout
DISPLACEMENT_FIELDS = {
    "anger": _field([
        ((2, 3, 4), (2.0, 4.0)), ((5, 6, 7), (-2.0, 4.0)), ((0, 1, 8, 9), (0.0, 2.0)),
        ((11, 12, 18, 19), (0.0, 1.5)), ((34, 35, 36, 37, 38), (0.0, 2.0)),
        ((40, 41, 42, 43, 44), (0.0, -2.0)), ((28, 29), (0.0, -1.0)),
    ]),
    "disgust": _field([
        ((28, 29), (0.0, -3.0)), ((30, 31, 32), (0.0, -2.0)),
        ((34, 35, 36, 37, 38), (0.0, -4.0)), ((45, 46, 47, 48), (0.0, -2.5)),
        (_BROW_L, (0.0, 2.0)), (_BROW_R, (0.0, 2.0)), ((14, 15, 21, 22), (0.0, -1.5)),
    ]),
    "fear": _field([
        (_BROW_L, (1.5, -4.0)), (_BROW_R, (-1.5, -4.0)), ((11, 12, 18, 19), (0.0, -2.0)),
        (33, (-4.0, 1.0)), (39, (4.0, 1.0)), ((40, 41, 42, 43, 44, 49, 50), (0.0, 2.0)),
    ]),
    "happiness": _field([
        (33, (-4.0, -4.0)), (39, (4.0, -4.0)), ((34, 44, 45), (-2.0, -2.0)), ((38, 40, 48), (2.0, -2.0)),
        ((14, 15, 21, 22), (0.0, -1.5)), ((28,), (-1.0, -1.0)), ((29,), (1.0, -1.0)),
    ]),
    "sadness": _field([
        ((3, 4), (0.0, -3.0)), ((5, 6), (0.0, -3.0)), ((0, 9), (0.0, 1.5)),
        (33, (-1.0, 4.0)), (39, (1.0, 4.0)), ((42, 51), (0.0, -1.5)), ((11, 12, 18, 19), (0.0, 1.0)),
    ]),
    "surprise": _field([
        (_BROW_L, (0.0, -6.0)), (_BROW_R, (0.0, -6.0)), ((11, 12, 18, 19), (0.0, -2.5)),
        ((41, 42, 43), (0.0, 7.0)), ((40, 44, 49, 50), (0.0, 5.0)), (51, (0.0, 8.0)),
        (33, (1.0, 2.0)), (39, (-1.0, 2.0)),
    ]),
}


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 6
    per_category: int = 40
    frames: tuple[int, int] = (12, 30)
    sigma: float = 0.5
    translation: float = 20.0
    scale_range: tuple[float, float] = (0.8, 1.25)
    intensity_range: tuple[float, float] = (0.8, 1.2)
    motion_scale: float = 1.0
    offset_fraction: float = 0.0
    landmark_subset: str = "all"
    seed: int = 0
    name: str = "synth"

    def __post_init__(self):
        if not 2 <= self.n_classes <= len(EXPRESSIONS):
            raise ConfigError(f"n_classes must be in 2..{len(EXPRESSIONS)}")
        if self.per_category < 1:
            raise ConfigError("per_category must be >= 1")
        lo, hi = self.frames
        if lo < 2 or hi < lo:
            raise ConfigError("frames range must satisfy 2 <= lo <= hi")
        if self.sigma < 0 or self.translation < 0 or self.motion_scale < 0:
            raise ConfigError("sigma, translation and motion_scale must be >= 0")
        if not 0 < self.scale_range[0] <= self.scale_range[1]:
            raise ConfigError("scale_range must be positive and ordered")
        if not 0 <= self.intensity_range[0] <= self.intensity_range[1]:
            raise ConfigError("intensity_range must be non-negative and ordered")
        if not 0 <= self.offset_fraction < 1:
            raise ConfigError("offset_fraction must be in [0, 1)")

    @property
    def labels(self) -> tuple[str, ...]:
        return EXPRESSIONS[: self.n_classes]

    @property
    def jitter(self) -> bool:
        return self.translation > 0 or self.scale_range != (1.0, 1.0)


def no_jitter(cfg: SynthConfig, **changes) -> SynthConfig:
    from dataclasses import replace
    return replace(cfg, translation=0.0, scale_range=(1.0, 1.0), **changes)


def activation_curve(n_frames, offset_fraction=0.0):
    """Raised-cosine ramp 0 -> 1; with an offset tail it falls back to 0."""
    t = np.linspace(0.0, 1.0, n_frames)
    if offset_fraction <= 0:
        return 0.5 * (1.0 - np.cos(np.pi * t))
    apex = 1.0 - offset_fraction
    rise = 0.5 * (1.0 - np.cos(np.pi * np.clip(t / apex, 0, 1)))
    fall = 0.5 * (1.0 + np.cos(np.pi * np.clip((t - apex) / offset_fraction, 0, 1)))
    return np.where(t <= apex, rise, fall)


def _jitter(points, rng, cfg):
    center = NEUTRAL_52.mean(axis=0)
    lo, hi = cfg.scale_range
    scale = float(np.exp(rng.uniform(np.log(lo), np.log(hi)))) if hi > lo else lo
    shift = rng.uniform(-cfg.translation, cfg.translation, size=2) if cfg.translation > 0 else np.zeros(2)
    return center + scale * (points - center) + shift


def _subset(points, cfg):
    subset = resolve_subset(cfg.landmark_subset, points.shape[1])
    return points if subset is None else points[:, list(subset)]


@dataclass
class SyntheticDataset:
    sequences: list
    label_set: tuple
    subjects: list = field(default_factory=list)
    name: str = "synth"

    @property
    def labels(self):
        return [s.label for s in self.sequences]

    def save(self, out_dir) -> Path:
        """Write every sequence and ``manifest.csv``; returns the manifest path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        entries = []
        for seq, subject in zip(self.sequences, self.subjects):
            fname = f"{seq.source_id}.csv"
            save_sequence(seq, out / fname)
            entries.append(ManifestEntry(fname, seq.label, subject, self.name))
        manifest = out / "manifest.csv"
        write_manifest(manifest, entries, self.label_set)
        return manifest


def generate(cfg: SynthConfig = SynthConfig()) -> SyntheticDataset:
    """Expression clips, ``per_category`` per label, ordered by label then index."""
    fields = [DISPLACEMENT_FIELDS[name] * cfg.motion_scale for name in cfg.labels]
    sequences, subjects = [], []
    for c, label in enumerate(cfg.labels):
        for r in range(cfg.per_category):
            index = c * cfg.per_category + r
            rng = np.random.default_rng(derive_seed(cfg.seed, "synth", index))
            n = int(rng.integers(cfg.frames[0], cfg.frames[1] + 1))
            intensity = rng.uniform(*cfg.intensity_range)
            ramp = activation_curve(n, cfg.offset_fraction) * intensity
            pts = NEUTRAL_52[None] + ramp[:, None, None] * fields[c][None]
            if cfg.sigma > 0:
                pts = pts + rng.normal(0.0, cfg.sigma, size=pts.shape)
            pts = _jitter(pts, rng, cfg)
            sequences.append(LandmarkSequence(_subset(pts, cfg), f"{cfg.name}_{index:04d}", label))
            subjects.append(f"subject{r:03d}")
    return SyntheticDataset(sequences, cfg.labels, subjects, cfg.name)


COUPLED_LABELS = ("in_phase", "anti_phase")


def generate_coupled_pair(cfg: SynthConfig = SynthConfig(n_classes=2, per_category=60),
                          pair=MOUTH_CORNERS, amplitude=(2.5, 3.5)) -> SyntheticDataset:
    """Two categories that differ only in how two landmarks move relative to each other.

    Both landmarks of ``pair`` oscillate along the line joining them through
    one full sine period. In ``in_phase`` clips they move together, so their
    distance never changes; in ``anti_phase`` clips they move oppositely.
    Each landmark's own path (and hence its displacement extremes) has the
    same distribution in both categories; everything else only carries noise.
    """
    p, q = pair
    axis = NEUTRAL_52[q] - NEUTRAL_52[p]
    axis = axis / np.hypot(*axis)
    sequences, subjects = [], []
    for c, label in enumerate(COUPLED_LABELS):
        for r in range(cfg.per_category):
            index = c * cfg.per_category + r
            rng = np.random.default_rng(derive_seed(cfg.seed, "coupled", index))
            n = int(rng.integers(cfg.frames[0], cfg.frames[1] + 1))
            amp = rng.uniform(*amplitude) * cfg.motion_scale
            sign = 1.0 if rng.random() < 0.5 else -1.0
            wave = sign * amp * np.sin(2.0 * np.pi * np.linspace(0.0, 1.0, n))
            pts = np.repeat(NEUTRAL_52[None], n, axis=0)
            pts[:, p] += wave[:, None] * axis
            pts[:, q] += (wave if label == "in_phase" else -wave)[:, None] * axis
            if cfg.sigma > 0:
                pts = pts + rng.normal(0.0, cfg.sigma, size=pts.shape)
            pts = _jitter(pts, rng, cfg)
            sequences.append(LandmarkSequence(_subset(pts, cfg), f"coupled_{index:04d}", label))
            subjects.append(f"subject{r:03d}")
    return SyntheticDataset(sequences, COUPLED_LABELS, subjects, cfg.name)
