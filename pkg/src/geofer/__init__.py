"""Facial-expression recognition from the geometry of tracked landmarks.

Landmark trajectories are normalized against a mean face, turned into
point, line or triangle deformation features, boosted down to a salient
subset with ELM weak learners, and classified by an RBF support vector
machine.
"""

from .config import ExperimentConfig, RunMetadata, __version__, derive_seed
from .errors import (ConfigError, DatasetError, DegenerateGeometryError, FormatError, GeoferError,
                     StageError)
from .evaluation import (PipelineModel, cross_dataset, fit_pipeline, kfold_evaluate, predict_pipeline,
                         sweep_feature_count)
from .landmark_io import LandmarkSequence, load_manifest, load_sequence, save_sequence
from .metrics import ConfusionMatrix, macro_accuracy, stratified_folds
from .synthgen import SynthConfig, generate, generate_coupled_pair

__all__ = [
    "ConfigError", "ConfusionMatrix", "DatasetError", "DegenerateGeometryError", "ExperimentConfig",
    "FormatError", "GeoferError", "LandmarkSequence", "PipelineModel", "RunMetadata", "StageError",
    "SynthConfig", "__version__", "cross_dataset", "derive_seed", "fit_pipeline", "generate",
    "generate_coupled_pair", "kfold_evaluate", "load_manifest", "load_sequence", "macro_accuracy",
    "predict_pipeline", "save_sequence", "stratified_folds", "sweep_feature_count",
]
