"""Graph-based velocity-profile prediction for highway scenes.

Scenes are vectorized into per-object polylines, encoded by a small
subgraph/attention network, and decoded into a bounded velocity profile that
the lateral planner can consume through the profile exchange format.
"""
from .data import (
    Example,
    export_profile,
    load_dataset,
    load_example,
    split_dataset,
    synthesize_episodes,
)
from .encoding import (
    EncoderConfig,
    SceneGraph,
    VectorFeature,
    feature_matrix,
    vectorize,
)
from .model import VelocityNet, load_model, predict_velocities, save_model
from .training import TrainReport, dataset_ade_fde, evaluate_ade_fde, train

__all__ = [
    "EncoderConfig",
    "Example",
    "SceneGraph",
    "TrainReport",
    "VectorFeature",
    "VelocityNet",
    "dataset_ade_fde",
    "evaluate_ade_fde",
    "export_profile",
    "feature_matrix",
    "load_dataset",
    "load_example",
    "load_model",
    "predict_velocities",
    "save_model",
    "split_dataset",
    "synthesize_episodes",
    "train",
    "vectorize",
]
