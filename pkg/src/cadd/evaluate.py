"""Correspondence quality and disentanglement metrics."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .data.composite import CompositeFrame, make_two_object_composites
from .data.types import Dataset, Frame, Sequence
from .geometry import Pixel
from .model import DescriptorImage, DescriptorNet, ModelError, descriptor_at

AUC_CUTOFF = 0.2


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Best-match lookup
# ---------------------------------------------------------------------------


def _field(target) -> np.ndarray:
    values = target.values if isinstance(target, DescriptorImage) else np.asarray(target)
    if values.ndim != 3:
        raise EvalError("target must be an (H, W, D) descriptor field")
    return values


def distance_heatmap(query: np.ndarray, target) -> np.ndarray:
    """Per-pixel L2 distance between the query descriptor and the target field."""
    values = _field(target)
    q = np.asarray(query, dtype=values.dtype)
    if q.shape != (values.shape[2],):
        raise EvalError(f"query dim {q.shape} does not match field depth {values.shape[2]}")
    return kernels.distance_field(np.ascontiguousarray(values), np.ascontiguousarray(q))


def best_match(query: np.ndarray, target, mask: Optional[np.ndarray] = None):
    """Argmin-distance pixel (ties -> lowest row-major index) and its distance."""
    dist = distance_heatmap(query, target).astype(np.float64)
    if mask is not None:
        if mask.shape != dist.shape:
            raise EvalError("mask size does not match the descriptor field")
        if not mask.any():
            raise EvalError("best_match over an empty mask")
        dist = np.where(mask, dist, np.inf)
    flat = int(np.argmin(dist))
    v, u = divmod(flat, dist.shape[1])
    return Pixel(float(u), float(v)), float(dist[v, u])


class DescriptorMatcher:
    """Model-backed matcher with an LRU cache of descriptor images."""

    def __init__(self, model: DescriptorNet, cache_size: int = 128):
        self.model = model
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()

    def describe(self, rgb: np.ndarray, key=None) -> DescriptorImage:
        if key is None:
            return self.model.describe(rgb)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        desc = self.model.describe(rgb)
        self._cache[key] = desc
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return desc

    def query(self, rgb: np.ndarray, pixel, key=None) -> np.ndarray:
        return descriptor_at(self.describe(rgb, key), pixel)

    def match(self, rgb_q, pixel_q, rgb_t, mask=None, key_q=None, key_t=None):
        q = self.query(rgb_q, pixel_q, key=key_q)
        return best_match(q, self.describe(rgb_t, key=key_t), mask=mask)


# ---------------------------------------------------------------------------
# Keypoint transfer CDF
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class CdfResult:
    """Sorted diagonal-normalized errors with CDF and bounded-area summaries."""

    errors: np.ndarray
    n_excluded: int = 0

    def __post_init__(self):
        self.errors = np.sort(np.asarray(self.errors, dtype=np.float64))

    def fraction(self, threshold: float) -> float:
        if self.errors.size == 0:
            return 0.0
        return float(np.searchsorted(self.errors, threshold, side="right") / self.errors.size)

    @property
    def auc(self) -> float:
        """Normalized area under the CDF up to the 0.2 cutoff, in [0, 1]."""
        if self.errors.size == 0:
            return 0.0
        return float(np.clip(1.0 - self.errors / AUC_CUTOFF, 0.0, 1.0).mean())

    def to_dict(self) -> dict:
        return {
            "errors": self.errors.tolist(),
            "n_excluded": self.n_excluded,
            "auc": self.auc,
        }


def build_transfer_pairs(dataset: Dataset, n_pairs: int, rng: np.random.Generator):
    """Random same-sequence (query view, target view) pairs for transfer eval."""
    pairs = []
    seqs = dataset.sequences
    for _ in range(n_pairs):
        seq = seqs[rng.integers(len(seqs))]
        ia, ib = rng.choice(len(seq.frames), size=2, replace=False)
        pairs.append((seq.sequence_id, int(ia), int(ib)))
    return pairs


def keypoint_transfer_errors(matcher, dataset: Dataset, pairs) -> CdfResult:
    """Best-match each labeled query landmark into the target view.

    The error is the pixel distance to the target's label over the target
    image diagonal. Landmarks missing (occluded) in the target are excluded
    and counted.
    """
    errors = []
    excluded = 0
    for seq_id, fq, ft in pairs:
        seq = dataset.by_id(seq_id)
        marks_q = dataset.keypoints.get(seq_id, {}).get(fq, {})
        marks_t = dataset.keypoints.get(seq_id, {}).get(ft, {})
        frame_q, frame_t = seq.frames[fq], seq.frames[ft]
        diag = frame_t.intrinsics.diagonal
        for name, (uq, vq) in marks_q.items():
            if name not in marks_t:
                excluded += 1
                continue
            pix, _ = matcher.match(
                frame_q.rgb,
                (uq, vq),
                frame_t.rgb,
                key_q=(seq_id, fq),
                key_t=(seq_id, ft),
            )
            ut, vt = marks_t[name]
            errors.append(np.hypot(pix.u - ut, pix.v - vt) / diag)
    return CdfResult(np.asarray(errors), n_excluded=excluded)


# ---------------------------------------------------------------------------
# Multi-object on-object rate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompositeQuery:
    composite: int
    sequence_id: str
    frame_id: int
    pixel: tuple[float, float]
    instance: str


def build_composite_queries(
    dataset: Dataset,
    composites: list[CompositeFrame],
    rng: np.random.Generator,
    per_instance: int = 3,
) -> list[CompositeQuery]:
    """Labeled landmark queries against each composite.

    Queries come from views *other* than the view pasted into the composite.
    """
    by_instance = {
        (s.true_instance_class or s.sequence_id): s for s in dataset.sequences
    }
    queries = []
    for ci, comp in enumerate(composites):
        used = {tuple(x) for x in comp.meta.get("frames", [])}
        for source in comp.sources:
            seq = by_instance[source]
            marks = dataset.keypoints.get(seq.sequence_id, {})
            candidates = [
                (t, m)
                for t, m in sorted(marks.items())
                if m and (seq.sequence_id, t) not in used
            ]
            if not candidates:
                continue
            for _ in range(per_instance):
                t, m = candidates[rng.integers(len(candidates))]
                name = sorted(m)[rng.integers(len(m))]
                queries.append(CompositeQuery(ci, seq.sequence_id, t, m[name], source))
    return queries


def on_object_match_rate(matcher, dataset: Dataset, composites: list[CompositeFrame], queries) -> float:
    """Fraction of best matches landing on the correct instance's provenance."""
    if not queries:
        raise EvalError("no composite queries")
    hits = 0
    for q in queries:
        comp = composites[q.composite]
        frame = dataset.by_id(q.sequence_id).frames[q.frame_id]
        pix, _ = matcher.match(
            frame.rgb,
            q.pixel,
            comp.rgb,
            key_q=(q.sequence_id, q.frame_id),
            key_t=("composite", q.composite),
        )
        u, v = pix.rounded()
        hits += bool(comp.region(q.instance)[v, u])
    return hits / len(queries)


# ---------------------------------------------------------------------------
# Clustering accuracy
# ---------------------------------------------------------------------------


def clustering_accuracy(predicted, truth) -> float:
    """Hungarian-matched fraction of correctly assigned samples."""
    pred = np.asarray(predicted)
    true = np.asarray(truth)
    if pred.shape != true.shape:
        raise EvalError("predicted and truth label arrays must align")
    _, pred_idx = np.unique(pred, return_inverse=True)
    _, true_idx = np.unique(true, return_inverse=True)
    k = pred_idx.max() + 1
    c = true_idx.max() + 1
    counts = np.zeros((k, c), dtype=np.int64)
    np.add.at(counts, (pred_idx, true_idx), 1)
    rows, cols = linear_sum_assignment(-counts)
    return float(counts[rows, cols].sum() / pred.size)


# ---------------------------------------------------------------------------
# Raw descriptor export
# ---------------------------------------------------------------------------


def export_descriptor_samples(model: DescriptorNet, frames, pixels_per_frame: int,
                              rng: Optional[np.random.Generator] = None):
    """Sample on-object descriptors with provenance for external projection.

    frames: iterable of (Sequence, Frame). Returns (descriptors (M, D), rows)
    where each row records sequence, labels, frame and pixel.
    """
    rng = rng or np.random.default_rng()
    descs = []
    rows = []
    for seq, frame in frames:
        desc = model.describe(frame.rgb)
        vs, us = np.nonzero(frame.mask)
        if us.size == 0:
            continue
        idx = rng.integers(0, us.size, size=pixels_per_frame)
        for i in idx:
            u, v = int(us[i]), int(vs[i])
            descs.append(desc.values[v, u])
            rows.append(
                {
                    "sequence_id": seq.sequence_id,
                    "instance": seq.true_instance_class,
                    "category": seq.true_category,
                    "frame_id": frame.frame_id,
                    "u": u,
                    "v": v,
                }
            )
    if not descs:
        return np.zeros((0, model.config.d_desc), dtype=np.float32), []
    return np.stack(descs), rows


# ---------------------------------------------------------------------------
# Comparative report
# ---------------------------------------------------------------------------


def evaluation_report(
    dataset: Dataset,
    models: dict[str, DescriptorNet],
    n_composites: int = 20,
    n_transfer_pairs: int = 60,
    queries_per_instance: int = 3,
    seed: int = 0,
) -> dict:
    """Single/multi-object metrics for several models on one seeded protocol."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 10)))
    composites = make_two_object_composites(dataset, n_composites, rng)
    queries = build_composite_queries(dataset, composites, rng, queries_per_instance)
    pairs = build_transfer_pairs(dataset, n_transfer_pairs, rng)

    report = {
        "seed": seed,
        "n_composites": n_composites,
        "n_queries": len(queries),
        "n_transfer_pairs": len(pairs),
        "auc_cutoff": AUC_CUTOFF,
        "models": {},
    }
    for name, model in models.items():
        matcher = DescriptorMatcher(model)
        cdf = keypoint_transfer_errors(matcher, dataset, pairs)
        rate = on_object_match_rate(matcher, dataset, composites, queries)
        report["models"][name] = {
            "on_object_match_rate": rate,
            "keypoint_transfer": cdf.to_dict(),
        }
    return report


def plot_cdfs(cdfs: dict[str, CdfResult], path) -> None:
    """Cumulative error curves (normalized error vs fraction of matches)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    grid = np.linspace(0, 0.5, 200)
    for name, cdf in cdfs.items():
        ax.plot(grid, [cdf.fraction(t) for t in grid], label=f"{name} (auc={cdf.auc:.3f})")
    ax.set_xlabel("error / image diagonal")
    ax.set_ylabel("fraction of matches")
    ax.set_ylim(0, 1.02)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
