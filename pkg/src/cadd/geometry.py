"""Projective geometry and correspondence supervision.

Pixel convention: (u, v) = (column, row), array access raster[v, u], pixel
centers at integer coordinates. Depth is the camera-frame z coordinate in
meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .data.types import CameraIntrinsics, CameraPose, Frame


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Pixel:
    """(u, v) = (column, row); real-valued for reprojection results."""

    u: float
    v: float

    def rounded(self) -> tuple[int, int]:
        return int(round(self.u)), int(round(self.v))

    def __iter__(self):
        yield self.u
        yield self.v


# ---------------------------------------------------------------------------
# Pinhole projection
# ---------------------------------------------------------------------------


def unproject(pixels, depth, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """Lift pixels with depth into world-frame 3D points.

    pixels: (2,) or (N, 2) array-like of (u, v); depth: scalar or (N,).
    Returns (3,) or (N, 3).
    """
    p = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    z = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    if np.any(z <= 0):
        raise GeometryError("unproject requires depth > 0")
    x = (p[:, 0] - intrinsics.cx) * z / intrinsics.fx
    y = (p[:, 1] - intrinsics.cy) * z / intrinsics.fy
    cam = np.stack([x, y, z], axis=1)
    world = cam @ pose.rotation.T + pose.translation
    if np.asarray(pixels).ndim == 1:
        return world[0]
    return world


def project(points, intrinsics: CameraIntrinsics, pose: CameraPose):
    """Project world points into the image. Returns (pixels, depth).

    points: (3,) or (N, 3). Raises when any point is at or behind the camera.
    """
    w = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rot_cw, center = pose.inverse_parts()
    cam = (w - center) @ rot_cw.T
    z = cam[:, 2]
    if np.any(z <= 0):
        raise GeometryError("point behind camera (z <= 0)")
    u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    pix = np.stack([u, v], axis=1)
    if np.asarray(points).ndim == 1:
        return pix[0], float(z[0])
    return pix, z


# ---------------------------------------------------------------------------
# Match / non-match batches
# ---------------------------------------------------------------------------


@dataclass
class MatchBatch:
    """Aligned pixel pairs between two frames.

    pixels_a are integer sample locations in frame a; pixels_b are real-valued
    (reprojection results keep sub-pixel precision, round for raster lookups).
    """

    pixels_a: np.ndarray  # (N, 2) float64, integral values for matches
    pixels_b: np.ndarray  # (N, 2) float64
    kind: str  # "match" | "non-match"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pixels_a.shape != self.pixels_b.shape or self.pixels_a.ndim != 2:
            raise GeometryError("pixel arrays must be aligned (N, 2)")
        if self.kind not in ("match", "non-match"):
            raise GeometryError(f"unknown batch kind {self.kind!r}")

    def __len__(self) -> int:
        return self.pixels_a.shape[0]


def _eligible_matches(frame_a: Frame, frame_b: Frame, depth_tolerance: float):
    """All mask_a pixels whose reprojection into frame_b survives the
    in-bounds / mask / depth-consistency (occlusion) test."""
    vs, us = np.nonzero(frame_a.mask & (frame_a.depth > 0))
    if us.size == 0:
        return us, vs, np.zeros((0, 2))
    pix = np.stack([us, vs], axis=1).astype(np.float64)
    z = frame_a.depth[vs, us].astype(np.float64)
    world = unproject(pix, z, frame_a.intrinsics, frame_a.pose)
    rot_cw, center = frame_b.pose.inverse_parts()
    intr = frame_b.intrinsics
    u, v, _, ok = kernels.reproject_check(
        np.ascontiguousarray(world),
        np.ascontiguousarray(rot_cw),
        np.ascontiguousarray(center),
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        frame_b.depth.astype(np.float64),
        frame_b.mask,
        depth_tolerance,
    )
    return us[ok], vs[ok], np.stack([u[ok], v[ok]], axis=1)


def find_matches(
    frame_a: Frame,
    frame_b: Frame,
    n_matches: int,
    depth_tolerance: float = 0.003,
    rng: Optional[np.random.Generator] = None,
) -> MatchBatch:
    """Sample occlusion-checked pixel correspondences from a to b.

    Returns up to n_matches pairs drawn uniformly without replacement from
    the eligible mask pixels; empty batch when nothing is eligible.
    """
    rng = rng or np.random.default_rng()
    us, vs, pix_b = _eligible_matches(frame_a, frame_b, depth_tolerance)
    n_avail = us.size
    if n_avail == 0:
        return MatchBatch(np.zeros((0, 2)), np.zeros((0, 2)), "match", {"eligible": 0})
    take = min(n_matches, n_avail)
    idx = rng.choice(n_avail, size=take, replace=False)
    pa = np.stack([us[idx], vs[idx]], axis=1).astype(np.float64)
    return MatchBatch(pa, pix_b[idx], "match", {"eligible": int(n_avail)})


def true_correspondence(frame_a: Frame, frame_b: Frame, pixels) -> tuple[np.ndarray, np.ndarray]:
    """Geometric correspondence of frame-a pixels in frame b, where computable.

    Returns (pixels_b (N, 2), computable (N,) bool). No occlusion check:
    this is the pure reprojection used for non-match exclusion zones.
    """
    p = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    us = p[:, 0].round().astype(np.int64)
    vs = p[:, 1].round().astype(np.int64)
    z = frame_a.depth[vs, us].astype(np.float64)
    out = np.zeros_like(p)
    computable = z > 0
    if computable.any():
        world = unproject(p[computable], z[computable], frame_a.intrinsics, frame_a.pose)
        rot_cw, center = frame_b.pose.inverse_parts()
        cam = (world - center) @ rot_cw.T
        zc = cam[:, 2]
        front = zc > 0
        intr = frame_b.intrinsics
        uu = np.where(front, intr.fx * cam[:, 0] / np.where(front, zc, 1.0) + intr.cx, 0.0)
        vv = np.where(front, intr.fy * cam[:, 1] / np.where(front, zc, 1.0) + intr.cy, 0.0)
        sub = np.stack([uu, vv], axis=1)
        idx = np.nonzero(computable)[0]
        out[idx[front]] = sub[front]
        computable = computable.copy()
        computable[idx[~front]] = False
    return out, computable


def _pixel_pool(frame: Frame, on_object: bool):
    if on_object:
        vs, us = np.nonzero(frame.mask)
        if us.size > 0:
            return np.stack([us, vs], axis=1), True
    w, h = frame.size
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    return np.stack([uu.ravel(), vv.ravel()], axis=1), False


def sample_nonmatches(
    frame_a: Frame,
    frame_b: Frame,
    n: int,
    mode: str = "anywhere",
    exclusion_radius: float = 5.0,
    rng: Optional[np.random.Generator] = None,
) -> MatchBatch:
    """Sample pixel pairs that are not correspondences.

    mode "anywhere" draws both pixels uniformly over the full images; mode
    "on_object" restricts both to the object masks (falling back to anywhere
    when a mask is empty, recorded in batch meta). Any pair whose pixel_b
    falls within exclusion_radius (L2, pixels) of the true correspondence of
    pixel_a is resampled.
    """
    if n <= 0:
        raise GeometryError("n must be positive")
    rng = rng or np.random.default_rng()
    want_object = mode == "on_object"
    if mode not in ("anywhere", "on_object"):
        raise GeometryError(f"unknown mode {mode!r}")

    pool_a, a_on_mask = _pixel_pool(frame_a, want_object)
    pool_b, b_on_mask = _pixel_pool(frame_b, want_object)
    fallback = want_object and not (a_on_mask and b_on_mask)

    pa = pool_a[rng.integers(0, pool_a.shape[0], size=n)].astype(np.float64)
    target, computable = true_correspondence(frame_a, frame_b, pa)

    pb = pool_b[rng.integers(0, pool_b.shape[0], size=n)].astype(np.float64)
    if exclusion_radius > 0:
        for _ in range(50):
            d = np.linalg.norm(pb - target, axis=1)
            bad = computable & (d < exclusion_radius)
            if not bad.any():
                break
            pb[bad] = pool_b[rng.integers(0, pool_b.shape[0], size=int(bad.sum()))]
        else:
            d = np.linalg.norm(pb - target, axis=1)
            keep = ~(computable & (d < exclusion_radius))
            pa, pb = pa[keep], pb[keep]

    return MatchBatch(pa, pb, "non-match", {"mode": mode, "fallback_anywhere": fallback})


# ---------------------------------------------------------------------------
# Correspondence-preserving augmentations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentationSpec:
    """Ranges for background randomization, color jitter, and crop/scale."""

    background_randomization: bool = True
    brightness: float = 0.1
    contrast: float = 0.1
    channel_gain: float = 0.05
    enable_crop: bool = True
    crop_scale_range: tuple[float, float] = (0.7, 1.0)
    min_mask_fraction: float = 0.5
    seed: Optional[int] = None

    @classmethod
    def identity(cls) -> "AugmentationSpec":
        return cls(
            background_randomization=False,
            brightness=0.0,
            contrast=0.0,
            channel_gain=0.0,
            enable_crop=False,
        )


@dataclass(frozen=True)
class PixelRemap:
    """Invertible affine map from original to augmented pixel coordinates."""

    scale: tuple[float, float]  # (sx, sy)
    offset: tuple[float, float]  # crop origin (x0, y0) in original coords
    out_size: tuple[int, int]  # (width, height)

    def apply(self, pixels) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        out = np.empty_like(p)
        out[:, 0] = (p[:, 0] - self.offset[0]) * self.scale[0]
        out[:, 1] = (p[:, 1] - self.offset[1]) * self.scale[1]
        return out if np.asarray(pixels).ndim == 2 else out[0]

    def invert(self, pixels) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        out = np.empty_like(p)
        out[:, 0] = p[:, 0] / self.scale[0] + self.offset[0]
        out[:, 1] = p[:, 1] / self.scale[1] + self.offset[1]
        return out if np.asarray(pixels).ndim == 2 else out[0]

    def in_bounds(self, pixels) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        w, h = self.out_size
        return (p[:, 0] >= 0) & (p[:, 0] <= w - 1) & (p[:, 1] >= 0) & (p[:, 1] <= h - 1)

    @property
    def is_identity(self) -> bool:
        return self.scale == (1.0, 1.0) and self.offset == (0.0, 0.0)


def _random_background(shape, rng) -> np.ndarray:
    """Blocky random color texture plus pixel noise."""
    h, w = shape
    cells = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    import cv2

    bg = cv2.resize(cells, (w, h), interpolation=cv2.INTER_NEAREST)
    noise = rng.integers(-12, 13, size=(h, w, 3))
    return np.clip(bg.astype(np.int32) + noise, 0, 255).astype(np.uint8)


def apply_augmentations(
    frame: Frame,
    spec: AugmentationSpec,
    rng: Optional[np.random.Generator] = None,
):
    """Augment a frame's RGB; returns (rgb, remap, mask_in_augmented_space).

    The remap transports original pixel coordinates into the augmented image.
    Raises after 10 failed attempts to sample a crop keeping at least
    spec.min_mask_fraction of the object mask.
    """
    import cv2

    if rng is None:
        rng = np.random.default_rng(spec.seed)
    rgb = frame.rgb
    mask = frame.mask
    h, w = mask.shape

    sx = sy = 1.0
    x0 = y0 = 0.0
    if spec.enable_crop and spec.crop_scale_range != (1.0, 1.0):
        total = int(mask.sum())
        for attempt in range(10):
            s = rng.uniform(*spec.crop_scale_range)
            cw = max(8, int(round(w * s)))
            ch = max(8, int(round(h * s)))
            cx0 = int(rng.integers(0, w - cw + 1))
            cy0 = int(rng.integers(0, h - ch + 1))
            kept = int(mask[cy0 : cy0 + ch, cx0 : cx0 + cw].sum())
            if total == 0 or kept >= spec.min_mask_fraction * total:
                break
        else:
            raise GeometryError("could not sample a crop keeping enough of the mask")
        crop_rgb = rgb[cy0 : cy0 + ch, cx0 : cx0 + cw]
        crop_mask = mask[cy0 : cy0 + ch, cx0 : cx0 + cw]
        rgb = cv2.resize(crop_rgb, (w, h), interpolation=cv2.INTER_LINEAR)
        mask = (
            cv2.resize(crop_mask.astype(np.uint8), (w, h), interpolation=cv2.INTER_NEAREST)
            .astype(bool)
        )
        sx, sy = w / cw, h / ch
        x0, y0 = float(cx0), float(cy0)

    if spec.background_randomization:
        bg = _random_background((h, w), rng)
        rgb = np.where(mask[:, :, None], rgb, bg)

    if spec.brightness > 0 or spec.contrast > 0 or spec.channel_gain > 0:
        img = rgb.astype(np.float32) / 255.0
        gain = rng.uniform(1 - spec.channel_gain, 1 + spec.channel_gain, size=3)
        contrast = rng.uniform(1 - spec.contrast, 1 + spec.contrast)
        bright = rng.uniform(-spec.brightness, spec.brightness)
        img = (img - 0.5) * contrast + 0.5
        img = img * gain[None, None, :] + bright
        rgb = (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    elif rgb is frame.rgb:
        rgb = rgb.copy()

    remap = PixelRemap(scale=(sx, sy), offset=(x0, y0), out_size=(w, h))
    return rgb, remap, mask
