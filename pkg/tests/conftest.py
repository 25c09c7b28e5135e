import numpy as np
import pytest

from cadd.data import default_scene_spec, generate_synthetic_dataset
from cadd.data.types import CameraIntrinsics, CameraPose, Frame


@pytest.fixture(scope="session")
def desk_dataset():
    """The 2 categories x 4 instances x 30 views acceptance-scale dataset."""
    return generate_synthetic_dataset(default_scene_spec(seed=11))


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small dataset for trainer smoke tests: 2 categories x 1 instance x 8 views."""
    return generate_synthetic_dataset(
        default_scene_spec(seed=5, instances_per_category=1, n_views=8, image_size=(48, 48))
    )


def make_plane_frame(tx=0.0, size=32, z=1.0, frame_id=0, fov_px=40.0):
    """Fronto-parallel full-image plane at depth z, camera at (tx, 0, 0)."""
    intr = CameraIntrinsics(
        fx=fov_px, fy=fov_px, cx=size / 2 - 0.5, cy=size / 2 - 0.5, width=size, height=size
    )
    pose = np.eye(4)
    pose[0, 3] = tx
    rng = np.random.default_rng(frame_id)
    return Frame(
        rgb=rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8),
        depth=np.full((size, size), z),
        mask=np.ones((size, size), dtype=bool),
        pose=CameraPose(pose),
        intrinsics=intr,
        frame_id=frame_id,
    )
