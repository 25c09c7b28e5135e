"""Data model, synthetic capture, persistence, and composites."""

from .composite import CompositeFrame, composite_multi_object, make_two_object_composites
from .io import load_composites, load_dataset, save_composites, save_dataset
from .synthetic import default_scene_spec, generate_synthetic_dataset
from .types import (
    CameraIntrinsics,
    CameraPose,
    CategorySpec,
    DataError,
    Dataset,
    Frame,
    SceneSpec,
    Sequence,
)

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "CategorySpec",
    "CompositeFrame",
    "DataError",
    "Dataset",
    "Frame",
    "SceneSpec",
    "Sequence",
    "composite_multi_object",
    "default_scene_spec",
    "generate_synthetic_dataset",
    "load_composites",
    "load_dataset",
    "make_two_object_composites",
    "save_composites",
    "save_dataset",
]
