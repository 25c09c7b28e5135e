"""Core data model: frames, sequences, datasets, and scene descriptions."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np


class DataError(ValueError):
    """Raised for malformed frames, sequences, or scene specs."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. Pixel (u, v) = (column, row), centers at integers."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DataError("principal point must lie inside the image")

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


class CameraPose:
    """Rigid world-from-camera transform (4x4, camera looks along +z)."""

    __slots__ = ("world_from_camera",)

    def __init__(self, world_from_camera: np.ndarray):
        m = np.asarray(world_from_camera, dtype=np.float64)
        if m.shape != (4, 4):
            raise DataError(f"pose must be 4x4, got {m.shape}")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise DataError("pose rotation block is not orthonormal")
        if np.linalg.det(r) < 0:
            raise DataError("pose rotation block has negative determinant")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise DataError("pose last row must be (0, 0, 0, 1)")
        self.world_from_camera = m

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_from_camera[:3, 3]

    def inverse_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """(camera-from-world rotation, camera center in world)."""
        return self.world_from_camera[:3, :3].T, self.world_from_camera[:3, 3]

    def __eq__(self, other):
        return isinstance(other, CameraPose) and np.array_equal(
            self.world_from_camera, other.world_from_camera
        )


@dataclass(eq=False)
class Frame:
    """One observation: RGB, metric depth (0 = invalid), object mask, pose."""

    rgb: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    pose: CameraPose
    intrinsics: CameraIntrinsics
    frame_id: int

    def __post_init__(self):
        h, w = self.depth.shape
        if self.rgb.shape != (h, w, 3):
            raise DataError("rgb and depth sizes disagree")
        if self.mask.shape != (h, w):
            raise DataError("mask and depth sizes disagree")
        if (h, w) != (self.intrinsics.height, self.intrinsics.width):
            raise DataError("raster size disagrees with intrinsics")
        if self.rgb.dtype != np.uint8:
            raise DataError("rgb must be uint8")
        if self.mask.dtype != np.bool_:
            raise DataError("mask must be boolean")

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)."""
        return self.intrinsics.width, self.intrinsics.height


@dataclass(eq=False)
class Sequence:
    """Ordered frames observing a single object instance."""

    sequence_id: str
    frames: list[Frame]
    true_instance_class: Optional[str] = None
    true_category: Optional[str] = None

    def __post_init__(self):
        if len(self.frames) < 2:
            raise DataError(f"sequence {self.sequence_id!r} needs >= 2 frames")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(eq=False)
class Dataset:
    sequences: list[Sequence]
    metadata: dict = field(default_factory=dict)
    keypoints: dict = field(default_factory=dict)
    """keypoints[seq_id][frame_id][landmark_name] = (u, v) for visible landmarks."""

    def __post_init__(self):
        ids = [s.sequence_id for s in self.sequences]
        if len(set(ids)) != len(ids):
            raise DataError("sequence ids must be unique")

    def __len__(self) -> int:
        return len(self.sequences)

    def by_id(self, sequence_id: str) -> Sequence:
        for s in self.sequences:
            if s.sequence_id == sequence_id:
                return s
        raise KeyError(sequence_id)


@dataclass(frozen=True)
class CategorySpec:
    """One object category: a base palette plus a box size range (meters)."""

    name: str
    base_color: tuple[float, float, float]
    size_lo: tuple[float, float, float] = (0.12, 0.12, 0.12)
    size_hi: tuple[float, float, float] = (0.2, 0.2, 0.2)
    pattern: str = "stripes"  # stripes | checker


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the synthetic multi-view capture."""

    categories: tuple[CategorySpec, ...]
    instances_per_category: int = 4
    n_views: int = 30
    image_size: tuple[int, int] = (64, 64)  # (width, height)
    orbit_radius: float = 0.58
    elevation_range: tuple[float, float] = (0.25, 1.2)  # radians
    fov_deg: float = 42.0
    seed: int = 0

    def __post_init__(self):
        if self.instances_per_category < 1:
            raise DataError("need >= 1 instance per category")
        if self.n_views < 2:
            raise DataError("need >= 2 views per sequence")
        if not self.categories:
            raise DataError("need >= 1 category")
        if self.orbit_radius <= 0:
            raise DataError("orbit radius must be positive")
