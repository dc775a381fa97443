"""Experiment configuration, seed derivation and run metadata."""

from __future__ import annotations

import dataclasses
import hashlib
import platform
import struct
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError

__version__ = "0.1.0"

FEATURE_KINDS = ("point", "line", "triangle")


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    """Derive a 63-bit seed from ``(master, stage, index)``.

    The value is a SHA-256 digest prefix, so it is stable across platforms
    and Python versions and does not depend on evaluation order.
    """
    digest = hashlib.sha256(f"{int(master)}|{stage}|{int(index)}".encode()).digest()
    return struct.unpack(">Q", digest[:8])[0] & 0x7FFF_FFFF_FFFF_FFFF


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _exponent_range(lo, hi, step=2):
    return tuple(range(lo, hi + 1, step))


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one experiment.

    ``rounds`` of ``None`` means the per-kind default (160 triangles,
    100 lines). SVM grids are powers of two given by their exponents.
    """

    kind: str = "triangle"
    n_frames: int = 10
    landmark_subset: str = "all"
    rounds: int | None = None
    folds: int = 10
    seed: int = 0
    # normalization
    scale_reference: float = 60.0
    reference_landmarks: tuple[int, int] | None = None
    # weak learners
    elm_hidden: int = 50
    elm_activation: str = "sigmoid"
    elm_ridge: float = 0.0
    elm_input: str = "deltas"
    elm_standardize: bool = True
    boost_mode: str = "rescore"
    # final classifier
    c_exponents: tuple[int, ...] = _exponent_range(-5, 15)
    gamma_exponents: tuple[int, ...] = _exponent_range(-15, 3)
    grid_folds: int = 5
    svm_tol: float = 1e-3
    # protocol
    selection: str = "strict"
    chunk_size: int = 512

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigError(f"kind must be one of {FEATURE_KINDS}, got {self.kind!r}")
        for name in ("n_frames", "folds", "elm_hidden", "grid_folds", "chunk_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n_frames < 2:
            raise ConfigError("n_frames must be >= 2")
        if self.rounds is not None and self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if self.scale_reference <= 0:
            raise ConfigError("scale_reference must be > 0")
        if self.elm_input not in ("deltas", "summary"):
            raise ConfigError("elm_input must be 'deltas' or 'summary'")
        if self.boost_mode not in ("rescore", "retrain"):
            raise ConfigError("boost_mode must be 'rescore' or 'retrain'")
        if self.selection not in ("strict", "global"):
            raise ConfigError("selection must be 'strict' or 'global'")
        if not self.c_exponents or not self.gamma_exponents:
            raise ConfigError("SVM grids must be non-empty")
        if self.elm_ridge < 0:
            raise ConfigError("elm_ridge must be >= 0")

    @property
    def boost_rounds(self) -> int:
        if self.rounds is not None:
            return self.rounds
        return 160 if self.kind == "triangle" else 100

    @property
    def c_grid(self) -> tuple[float, ...]:
        return tuple(2.0 ** e for e in self.c_exponents)

    @property
    def gamma_grid(self) -> tuple[float, ...]:
        return tuple(2.0 ** e for e in self.gamma_exponents)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        """Flat ``key = value`` rendering, readable by :func:`parse_config_text`."""
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                text = "none"
            elif isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw)
        return cls(**kwargs)


_INT_TUPLES = {"c_exponents", "gamma_exponents", "reference_landmarks"}
_INTS = {"n_frames", "rounds", "folds", "seed", "elm_hidden", "grid_folds", "chunk_size"}
_FLOATS = {"scale_reference", "elm_ridge", "svm_tol"}
_BOOLS = {"elm_standardize"}


def _coerce(key, raw):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    text = raw.strip()
    try:
        if text.lower() == "none":
            return None
        if key in _INT_TUPLES:
            if ":" in text:
                lo, hi, *step = (int(t) for t in text.split(":"))
                return _exponent_range(lo, hi, step[0] if step else 1)
            return tuple(int(t) for t in text.split(",") if t.strip())
        if key in _INTS:
            return int(text)
        if key in _FLOATS:
            return float(text)
        if key in _BOOLS:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return text


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def load_config(path, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_mapping(values)


@dataclass
class RunMetadata:
    """Provenance sidecar written next to experiment outputs."""

    config: ExperimentConfig
    master_seed: int
    command: str = ""
    version: str = __version__
    derived_seeds: dict = field(default_factory=dict)
    input_digests: dict = field(default_factory=dict)
    started: str = field(default_factory=lambda: _now())
    finished: str | None = None

    def seed_for(self, stage: str, index: int = 0) -> int:
        seed = derive_seed(self.master_seed, stage, index)
        self.derived_seeds[f"{stage}/{index}"] = seed
        return seed

    def add_input(self, path):
        self.input_digests[str(path)] = file_digest(path)

    def finish(self):
        self.finished = _now()

    def to_text(self) -> str:
        lines = [
            f"# geofer run metadata",
            f"command: {self.command}",
            f"version: {self.version}",
            f"python: {sys.version.split()[0]}",
            f"numpy: {np.__version__}",
            f"platform: {platform.platform()}",
            f"master_seed: {self.master_seed}",
            f"started: {self.started}",
            f"finished: {self.finished or ''}",
            "[config]",
            self.config.to_text().rstrip("\n"),
            "[derived_seeds]",
        ]
        lines += [f"{k}: {v}" for k, v in sorted(self.derived_seeds.items())]
        lines.append("[inputs]")
        lines += [f"{k}: sha256={v}" for k, v in sorted(self.input_digests.items())]
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_text())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
