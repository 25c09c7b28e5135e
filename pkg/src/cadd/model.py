"""Dense descriptor network, pixelwise contrastive losses, checkpoints."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .nn import BilinearResize, Conv2d, NearestResize, ReLU, Sequential

CHECKPOINT_SCHEMA = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d_desc: int = 5
    backbone: str = "small_fcn"  # small_fcn | resnet34_s8
    widths: tuple[int, int, int] = (32, 64, 96)
    upsampling: str = "bilinear"  # bilinear | nearest

    def __post_init__(self):
        if self.d_desc < 2:
            raise ModelError("d_desc must be >= 2")
        if self.backbone not in ("small_fcn", "resnet34_s8"):
            raise ModelError(f"unknown backbone {self.backbone!r}")
        if self.upsampling not in ("bilinear", "nearest"):
            raise ModelError(f"unknown upsampling {self.upsampling!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "d_desc": self.d_desc,
                "backbone": self.backbone,
                "widths": list(self.widths),
                "upsampling": self.upsampling,
            }
        )

    @classmethod
    def from_json(cls, s: str) -> "ModelConfig":
        d = json.loads(s)
        return cls(
            d_desc=d["d_desc"],
            backbone=d["backbone"],
            widths=tuple(d["widths"]),
            upsampling=d["upsampling"],
        )


@dataclass(eq=False)
class DescriptorImage:
    """Dense H x W x D descriptor field aligned with the source image."""

    values: np.ndarray
    frame_id: Optional[int] = None

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ModelError("descriptor field must be (H, W, D)")

    @property
    def shape(self):
        return self.values.shape


def descriptor_at(desc: DescriptorImage, pixel) -> np.ndarray:
    """Exact descriptor slice at an integer pixel (u, v)."""
    u, v = int(round(float(pixel[0]))), int(round(float(pixel[1])))
    h, w, _ = desc.values.shape
    if not (0 <= u < w and 0 <= v < h):
        raise ModelError(f"pixel ({u}, {v}) outside {w}x{h} descriptor field")
    return desc.values[v, u]


class DescriptorNet:
    """Small fully-convolutional descriptor network, stride 4, upsampled back."""

    STRIDE = 4

    def __init__(self, config: ModelConfig = ModelConfig(), rng=None):
        if config.backbone == "resnet34_s8":
            raise NotImplementedError(
                "resnet34_s8 is a reserved configuration; this build ships small_fcn"
            )
        rng = rng or np.random.default_rng()
        w1, w2, w3 = config.widths
        up = BilinearResize(4) if config.upsampling == "bilinear" else NearestResize(4)
        self.config = config
        self.net = Sequential(
            [
                Conv2d(3, w1, 3, stride=2, rng=rng),
                ReLU(),
                Conv2d(w1, w2, 3, stride=2, rng=rng),
                ReLU(),
                Conv2d(w2, w3, 3, stride=1, rng=rng),
                ReLU(),
                Conv2d(w3, config.d_desc, 3, stride=1, rng=rng),
                up,
            ]
        )

    @staticmethod
    def preprocess(rgb: np.ndarray) -> np.ndarray:
        """uint8 (H, W, 3) -> float32 (3, H, W) in [-0.5, 0.5]."""
        if rgb.dtype != np.uint8 or rgb.ndim != 3:
            raise ModelError("expected uint8 (H, W, 3) input")
        return (rgb.astype(np.float32) / 255.0 - 0.5).transpose(2, 0, 1)

    def _pad(self, x):
        _, h, w = x.shape
        s = self.STRIDE
        ph = (-h) % s
        pw = (-w) % s
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="edge")
        return x, (h, w)

    def describe(self, rgb: np.ndarray, frame_id: Optional[int] = None) -> DescriptorImage:
        """Inference: dense descriptors at input resolution."""
        x, (h, w) = self._pad(self.preprocess(rgb))
        out = self.net.infer(x)
        if not np.all(np.isfinite(out)):
            raise ModelError(
                f"non-finite descriptor output (min {np.nanmin(out)}, max {np.nanmax(out)})"
            )
        return DescriptorImage(out[:, :h, :w].transpose(1, 2, 0), frame_id=frame_id)

    def forward_train(self, rgb: np.ndarray):
        """Training forward; returns ((D, H, W) output, cache). H, W % 4 == 0."""
        x = self.preprocess(rgb)
        if x.shape[1] % self.STRIDE or x.shape[2] % self.STRIDE:
            raise ModelError("training inputs must be stride-aligned")
        return self.net.forward_train(x)

    def backward(self, cache, dout: np.ndarray) -> dict:
        _, grads = self.net.backward(cache, dout)
        return grads

    def named_params(self):
        return self.net.named_params()

    def state_dict(self):
        return self.net.state_dict()

    def load_state_dict(self, state):
        self.net.load_state_dict(state)


# ---------------------------------------------------------------------------
# Pixelwise contrastive losses
# ---------------------------------------------------------------------------


def match_loss(desc_a: np.ndarray, desc_b: np.ndarray) -> float:
    """Mean squared L2 distance over aligned match descriptors (0 if empty)."""
    a = np.atleast_2d(np.asarray(desc_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(desc_b, dtype=np.float64))
    if a.shape != b.shape:
        raise ModelError("descriptor lists must be aligned")
    if a.shape[0] == 0:
        return 0.0
    return float(((a - b) ** 2).sum(axis=1).mean())


def match_loss_grad(desc_a, desc_b):
    """(loss, d/d desc_a, d/d desc_b)."""
    a = np.atleast_2d(np.asarray(desc_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(desc_b, dtype=np.float64))
    if a.shape[0] == 0:
        return 0.0, np.zeros_like(a), np.zeros_like(b)
    diff = a - b
    loss = float((diff**2).sum(axis=1).mean())
    ga = 2.0 * diff / a.shape[0]
    return loss, ga, -ga


def nonmatch_loss(desc_a, desc_b, margin: float) -> float:
    """Hinge loss sum((margin - d)^2 for d < margin) / N_m.

    N_m counts the pairs inside the margin; defined as 0 when none are.
    """
    if margin <= 0:
        raise ModelError("margin must be positive")
    a = np.atleast_2d(np.asarray(desc_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(desc_b, dtype=np.float64))
    if a.shape != b.shape:
        raise ModelError("descriptor lists must be aligned")
    if a.shape[0] == 0:
        return 0.0
    dist = np.linalg.norm(a - b, axis=1)
    active = dist < margin
    n_m = int(active.sum())
    if n_m == 0:
        return 0.0
    return float(((margin - dist[active]) ** 2).sum() / n_m)


def nonmatch_loss_grad(desc_a, desc_b, margin: float):
    """(loss, d/d desc_a, d/d desc_b); subgradient 0 at zero distance."""
    a = np.atleast_2d(np.asarray(desc_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(desc_b, dtype=np.float64))
    ga = np.zeros_like(a)
    if a.shape[0] == 0:
        return 0.0, ga, np.zeros_like(b)
    diff = a - b
    dist = np.linalg.norm(diff, axis=1)
    active = dist < margin
    n_m = int(active.sum())
    if n_m == 0:
        return 0.0, ga, np.zeros_like(b)
    loss = float(((margin - dist[active]) ** 2).sum() / n_m)
    usable = active & (dist > 0)
    scale = -2.0 * (margin - dist[usable]) / (dist[usable] * n_m)
    ga[usable] = scale[:, None] * diff[usable]
    return loss, ga, -ga


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Checkpoint:
    model: DescriptorNet
    train_meta: dict = field(default_factory=dict)
    projection: Optional[object] = None  # hard.ProjectionNetwork
    class_model: Optional[object] = None  # hard.ClassModel
    feature_kind: Optional[str] = None


def save_checkpoint(path, model: DescriptorNet, train_meta: Optional[dict] = None,
                    projection=None, class_model=None, feature_kind: Optional[str] = None):
    """Single-archive checkpoint: parameters + config + training metadata."""
    arrays = {f"net/{k}": v for k, v in model.state_dict().items()}
    if projection is not None:
        arrays.update({f"proj/{k}": v for k, v in projection.state_dict().items()})
        arrays["proj/dims"] = np.asarray(projection.dims)
    if class_model is not None:
        arrays["classes/centroids"] = class_model.centroids
    meta = {
        "schema_version": CHECKPOINT_SCHEMA,
        "model_config": json.loads(model.config.to_json()),
        "train_meta": train_meta or {},
        "feature_kind": feature_kind,
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    from . import hard  # local import to avoid a module cycle

    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("schema_version") != CHECKPOINT_SCHEMA:
            raise ModelError(f"unsupported checkpoint schema {meta.get('schema_version')!r}")
        config = ModelConfig(
            d_desc=meta["model_config"]["d_desc"],
            backbone=meta["model_config"]["backbone"],
            widths=tuple(meta["model_config"]["widths"]),
            upsampling=meta["model_config"]["upsampling"],
        )
        model = DescriptorNet(config, rng=np.random.default_rng(0))
        model.load_state_dict({k[4:]: z[k] for k in z.files if k.startswith("net/")})

        projection = None
        if any(k.startswith("proj/") for k in z.files):
            dims = tuple(int(x) for x in z["proj/dims"])
            projection = hard.ProjectionNetwork(*dims, rng=np.random.default_rng(0))
            projection.load_state_dict(
                {k[5:]: z[k] for k in z.files if k.startswith("proj/") and k != "proj/dims"}
            )
        class_model = None
        if "classes/centroids" in z.files:
            class_model = hard.ClassModel(centroids=z["classes/centroids"])
    return Checkpoint(
        model=model,
        train_meta=meta.get("train_meta", {}),
        projection=projection,
        class_model=class_model,
        feature_kind=meta.get("feature_kind"),
    )
