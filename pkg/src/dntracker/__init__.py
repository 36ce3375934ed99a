"""Denoising-trained query-propagation tracker on a synthetic benchmark."""

__version__ = "0.1.0"

from .autodiff import AdamState, GraphError, ShapeError, Tape, Tensor, adam_step
from .assignment import (
    Assignment,
    TrackAssignment,
    align_to_ground_truth,
    canonical_slots,
    cosine_similarity_matrix,
    heuristic_track,
    hungarian,
)
from .noise import (
    NoiseOutcome,
    NoiseStrategy,
    apply_noise,
    noise_crop_concat,
    noise_shuffle,
    noise_weighted_average,
)
from .tracker import TrackerModel, init_model, propagate, tracker_forward
from .training import EvalReport, TrainConfig, evaluate, train, training_step
from .world import (
    ConfigError,
    FormatError,
    QueryFrame,
    Sequence,
    WorldConfig,
    gen_sequence,
    load_sequence,
    save_sequence,
    stratify_occlusion,
)

__all__ = [
    "AdamState",
    "Assignment",
    "ConfigError",
    "EvalReport",
    "FormatError",
    "GraphError",
    "NoiseOutcome",
    "NoiseStrategy",
    "QueryFrame",
    "Sequence",
    "ShapeError",
    "Tape",
    "Tensor",
    "TrackAssignment",
    "TrackerModel",
    "TrainConfig",
    "WorldConfig",
    "adam_step",
    "align_to_ground_truth",
    "apply_noise",
    "canonical_slots",
    "cosine_similarity_matrix",
    "evaluate",
    "gen_sequence",
    "heuristic_track",
    "hungarian",
    "init_model",
    "load_sequence",
    "noise_crop_concat",
    "noise_shuffle",
    "noise_weighted_average",
    "propagate",
    "save_sequence",
    "stratify_occlusion",
    "tracker_forward",
    "train",
    "training_step",
]
