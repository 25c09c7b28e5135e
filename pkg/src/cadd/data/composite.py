"""Multi-object evaluation composites: masked pastes with provenance maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence as Seq

import numpy as np

from .types import DataError, Dataset, Frame


@dataclass(eq=False)
class CompositeFrame:
    """Evaluation-only multi-object frame. Depth and pose are invalid.

    provenance[v, u] is the index into sources of the object covering the
    pixel (-1 for background); sources name the pasted instances.
    """

    rgb: np.ndarray
    mask: np.ndarray
    provenance: np.ndarray
    sources: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance.shape != self.mask.shape or self.rgb.shape[:2] != self.mask.shape:
            raise DataError("composite raster sizes disagree")
        if int(self.provenance.max(initial=-1)) >= len(self.sources):
            raise DataError("provenance references an unknown source")

    @property
    def size(self) -> tuple[int, int]:
        h, w = self.mask.shape
        return w, h

    def region(self, source: str) -> np.ndarray:
        """Boolean map of the pixels attributed to the named source."""
        idx = self.sources.index(source)
        return self.provenance == idx


def composite_multi_object(
    frames: Seq[Frame],
    layout: Seq[tuple[int, int]],
    background: np.ndarray,
    source_ids: Optional[Seq[str]] = None,
) -> CompositeFrame:
    """Paste masked objects onto a background, last paste wins.

    layout holds per-frame integer pixel offsets (dx, dy) added to source
    coordinates. Every shifted mask pixel must land inside the canvas, and no
    pasted object may end up fully covered by later pastes.
    """
    if len(frames) != len(layout):
        raise DataError("layout length must match frames")
    if not frames:
        raise DataError("need at least one source frame")
    if source_ids is None:
        source_ids = [str(i) for i in range(len(frames))]
    canvas = np.ascontiguousarray(background, dtype=np.uint8).copy()
    h, w = canvas.shape[:2]
    provenance = np.full((h, w), -1, dtype=np.int16)

    for i, (frame, (dx, dy)) in enumerate(zip(frames, layout)):
        vs, us = np.nonzero(frame.mask)
        if us.size == 0:
            raise DataError(f"source frame {i} has an empty mask")
        ut = us + int(dx)
        vt = vs + int(dy)
        if ut.min() < 0 or vt.min() < 0 or ut.max() >= w or vt.max() >= h:
            raise DataError(f"placement {i} puts object pixels outside the canvas")
        canvas[vt, ut] = frame.rgb[vs, us]
        provenance[vt, ut] = i

    counts = np.bincount(provenance[provenance >= 0], minlength=len(frames))
    buried = [source_ids[i] for i in range(len(frames)) if counts[i] == 0]
    if buried:
        raise DataError(f"fully overlapped paste(s): {buried}")

    return CompositeFrame(
        rgb=canvas,
        mask=provenance >= 0,
        provenance=provenance,
        sources=list(source_ids),
    )


def _block_background(size: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    import cv2

    w, h = size
    cells = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    bg = cv2.resize(cells, (w, h), interpolation=cv2.INTER_NEAREST)
    noise = rng.integers(-10, 11, size=(h, w, 3))
    return np.clip(bg.astype(np.int32) + noise, 0, 255).astype(np.uint8)


def make_two_object_composites(
    dataset: Dataset,
    n: int,
    rng: np.random.Generator,
    canvas_size: tuple[int, int] = (128, 80),
) -> list[CompositeFrame]:
    """Seeded evaluation composites pairing instances of different categories.

    Each composite pastes one frame from each of two sequences with distinct
    true categories onto a random textured background, side by side with
    jitter so neither object is buried.
    """
    by_cat: dict[str, list] = {}
    for s in dataset.sequences:
        by_cat.setdefault(s.true_category or "unknown", []).append(s)
    cats = sorted(by_cat)
    if len(cats) < 2:
        raise DataError("two-object composites need at least two categories")

    w, h = canvas_size
    out = []
    for k in range(n):
        ca, cb = rng.choice(len(cats), size=2, replace=False)
        seq_a = by_cat[cats[ca]][rng.integers(len(by_cat[cats[ca]]))]
        seq_b = by_cat[cats[cb]][rng.integers(len(by_cat[cats[cb]]))]
        fa = seq_a.frames[rng.integers(len(seq_a.frames))]
        fb = seq_b.frames[rng.integers(len(seq_b.frames))]

        placed = []
        for half, frame in ((0, fa), (1, fb)):
            vs, us = np.nonzero(frame.mask)
            bw = us.max() - us.min() + 1
            bh = vs.max() - vs.min() + 1
            x_lo = half * (w // 2)
            x_hi = x_lo + w // 2 - bw
            if x_hi < x_lo:
                x_hi = x_lo
            dx = int(rng.integers(x_lo, x_hi + 1)) - us.min()
            dy = int(rng.integers(0, max(1, h - bh))) - vs.min()
            placed.append((dx, dy))

        comp = composite_multi_object(
            [fa, fb],
            placed,
            _block_background(canvas_size, rng),
            source_ids=[seq_a.true_instance_class or seq_a.sequence_id,
                        seq_b.true_instance_class or seq_b.sequence_id],
        )
        comp.meta = {
            "index": k,
            "frames": [(seq_a.sequence_id, fa.frame_id), (seq_b.sequence_id, fb.frame_id)],
        }
        out.append(comp)
    return out
