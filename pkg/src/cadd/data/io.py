"""On-disk dataset layout.

root/
  dataset.json                      index, generator metadata
  keypoints.json                    seq -> frame -> landmark -> [u, v]
  sequences/<seq_id>/meta.json      intrinsics + optional truth labels
  sequences/<seq_id>/frames/<t>_rgb.png
  sequences/<seq_id>/frames/<t>_depth.png   16-bit PNG, millimeters, 0 = invalid
  sequences/<seq_id>/frames/<t>_mask.png
  sequences/<seq_id>/frames/<t>_pose.json   4x4 row-major world-from-camera
  composites/                       optional multi-object evaluation images
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from .composite import CompositeFrame
from .types import CameraIntrinsics, CameraPose, DataError, Dataset, Frame, Sequence

FORMAT_VERSION = 1


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


def _read_json(path: Path, what: str):
    if not path.exists():
        raise DataError(f"missing {what}: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"corrupt {what}: {path} ({e})") from e


def _read_image(path: Path, what: str, flags=cv2.IMREAD_UNCHANGED) -> np.ndarray:
    img = cv2.imread(str(path), flags)
    if img is None:
        raise DataError(f"missing or unreadable {what}: {path}")
    return img


def save_dataset(dataset: Dataset, root) -> None:
    root = Path(root)
    seq_dir = root / "sequences"
    seq_dir.mkdir(parents=True, exist_ok=True)
    index = {
        "version": FORMAT_VERSION,
        "metadata": dataset.metadata,
        "sequences": [
            {"id": s.sequence_id, "n_frames": len(s.frames)} for s in dataset.sequences
        ],
    }
    _write_json(root / "dataset.json", index)
    _write_json(root / "keypoints.json", _keypoints_to_json(dataset.keypoints))

    for seq in dataset.sequences:
        d = seq_dir / seq.sequence_id
        frames_dir = d / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)
        intr = seq.frames[0].intrinsics
        _write_json(
            d / "meta.json",
            {
                "intrinsics": intr.to_dict(),
                "true_instance_class": seq.true_instance_class,
                "true_category": seq.true_category,
            },
        )
        for f in seq.frames:
            t = f.frame_id
            if np.any(f.depth > 65.535):
                raise DataError(f"frame {t} of {seq.sequence_id!r}: depth exceeds 16-bit mm range")
            cv2.imwrite(str(frames_dir / f"{t}_rgb.png"), f.rgb[:, :, ::-1])
            depth_mm = np.round(f.depth * 1000.0).astype(np.uint16)
            cv2.imwrite(str(frames_dir / f"{t}_depth.png"), depth_mm)
            cv2.imwrite(str(frames_dir / f"{t}_mask.png"), f.mask.astype(np.uint8) * 255)
            _write_json(frames_dir / f"{t}_pose.json", f.pose.world_from_camera.tolist())


def load_dataset(root) -> Dataset:
    root = Path(root)
    index = _read_json(root / "dataset.json", "dataset index")
    if index.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported dataset version {index.get('version')!r}")

    sequences = []
    for entry in index["sequences"]:
        seq_id, n_frames = entry["id"], entry["n_frames"]
        d = root / "sequences" / seq_id
        meta = _read_json(d / "meta.json", f"sequence meta for {seq_id!r}")
        intr = CameraIntrinsics.from_dict(meta["intrinsics"])
        frames = []
        for t in range(n_frames):
            fdir = d / "frames"
            where = f"frame {t} of sequence {seq_id!r}"
            rgb = _read_image(fdir / f"{t}_rgb.png", f"rgb for {where}")[:, :, ::-1]
            depth_mm = _read_image(fdir / f"{t}_depth.png", f"depth for {where}")
            if depth_mm.dtype != np.uint16:
                raise DataError(f"corrupt depth for {where}: expected 16-bit PNG")
            mask = _read_image(fdir / f"{t}_mask.png", f"mask for {where}") > 0
            pose = CameraPose(np.asarray(_read_json(fdir / f"{t}_pose.json", f"pose for {where}")))
            frames.append(
                Frame(
                    rgb=np.ascontiguousarray(rgb),
                    depth=depth_mm.astype(np.float64) / 1000.0,
                    mask=mask,
                    pose=pose,
                    intrinsics=intr,
                    frame_id=t,
                )
            )
        sequences.append(
            Sequence(
                sequence_id=seq_id,
                frames=frames,
                true_instance_class=meta.get("true_instance_class"),
                true_category=meta.get("true_category"),
            )
        )

    keypoints = {}
    kp_path = root / "keypoints.json"
    if kp_path.exists():
        keypoints = _keypoints_from_json(_read_json(kp_path, "keypoints"))
    return Dataset(sequences=sequences, metadata=index.get("metadata", {}), keypoints=keypoints)


def _keypoints_to_json(keypoints: dict) -> dict:
    return {
        seq: {str(t): {name: list(px) for name, px in marks.items()} for t, marks in frames.items()}
        for seq, frames in keypoints.items()
    }


def _keypoints_from_json(obj: dict) -> dict:
    return {
        seq: {
            int(t): {name: (float(px[0]), float(px[1])) for name, px in marks.items()}
            for t, marks in frames.items()
        }
        for seq, frames in obj.items()
    }


# ---------------------------------------------------------------------------
# Composite persistence (evaluation-only frames)
# ---------------------------------------------------------------------------


def save_composites(composites: list[CompositeFrame], root) -> None:
    d = Path(root) / "composites"
    d.mkdir(parents=True, exist_ok=True)
    meta = []
    for k, c in enumerate(composites):
        cv2.imwrite(str(d / f"{k}_rgb.png"), c.rgb[:, :, ::-1])
        # provenance stored with +1 offset so 0 can encode background
        cv2.imwrite(str(d / f"{k}_provenance.png"), (c.provenance + 1).astype(np.uint8))
        meta.append({"sources": c.sources})
    _write_json(d / "meta.json", {"version": FORMAT_VERSION, "composites": meta})


def load_composites(root) -> list[CompositeFrame]:
    d = Path(root) / "composites"
    meta = _read_json(d / "meta.json", "composite meta")
    out = []
    for k, entry in enumerate(meta["composites"]):
        rgb = _read_image(d / f"{k}_rgb.png", f"composite {k} rgb")[:, :, ::-1]
        prov = _read_image(d / f"{k}_provenance.png", f"composite {k} provenance")
        prov = prov.astype(np.int16) - 1
        out.append(
            CompositeFrame(
                rgb=np.ascontiguousarray(rgb),
                mask=prov >= 0,
                provenance=prov,
                sources=list(entry["sources"]),
            )
        )
    return out
