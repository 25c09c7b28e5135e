"""Sequence similarity graph: per-sequence centroids, assignment-based
dissimilarity, global co-occupancy similarity, and random-walker sampling."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import cv2
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import kernels
from .data.types import Dataset, Frame

log = logging.getLogger(__name__)

FEATURE_KINDS = ("raw_image", "pretrained_backbone", "masked_descriptor")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    n_local: int = 5
    n_global: int = 300
    lam: float = 0.1
    feature_kind: str = "raw_image"
    target_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n_local < 1:
            raise GraphError("n_local must be >= 1")
        if self.feature_kind not in FEATURE_KINDS:
            raise GraphError(f"unknown feature kind {self.feature_kind!r}")

    def to_dict(self) -> dict:
        return {
            "n_local": self.n_local,
            "n_global": self.n_global,
            "lam": self.lam,
            "feature_kind": self.feature_kind,
            "target_size": self.target_size,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Frame features
# ---------------------------------------------------------------------------


def _mask_crop(raster: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Crop to the mask's bounding box, background filled with the object mean.

    Mean fill keeps the feature focused on the object's appearance instead of
    the view-dependent silhouette."""
    vs, us = np.nonzero(mask)
    if us.size == 0:
        raise GraphError("cannot extract features from an empty mask")
    mean = raster[mask].mean(axis=0)
    out = np.where(mask[:, :, None], raster, mean).astype(raster.dtype, copy=False)
    return out[vs.min() : vs.max() + 1, us.min() : us.max() + 1]


def _resize(img: np.ndarray, size: int) -> np.ndarray:
    if img.ndim == 3 and img.shape[2] > 4:  # INTER_AREA handles at most 4 channels
        planes = [
            cv2.resize(img[:, :, c], (size, size), interpolation=cv2.INTER_AREA)
            for c in range(img.shape[2])
        ]
        return np.stack(planes, axis=2)
    return cv2.resize(img, (size, size), interpolation=cv2.INTER_AREA)


def extract_features(
    frame: Frame,
    kind: str,
    target_size: int = 16,
    model=None,
    backbone_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    """Fixed-size per-frame feature vector from a mask-tight object crop."""
    if kind == "raw_image":
        crop = _mask_crop(frame.rgb, frame.mask)
        return (_resize(crop, target_size).astype(np.float32) / 255.0).ravel()
    if kind == "masked_descriptor":
        if model is None:
            raise GraphError("masked_descriptor features need a descriptor model")
        desc = model.describe(frame.rgb).values
        crop = _mask_crop(desc, frame.mask)
        return _resize(crop, target_size).astype(np.float32).ravel()
    if kind == "pretrained_backbone":
        if backbone_fn is None:
            raise GraphError("pretrained_backbone features need a frozen encoder callable")
        crop = _mask_crop(frame.rgb, frame.mask)
        return np.asarray(backbone_fn(_resize(crop, target_size)), dtype=np.float32).ravel()
    raise GraphError(f"unknown feature kind {kind!r}")


def dataset_features(dataset: Dataset, config: GraphConfig, model=None, backbone_fn=None):
    """Per-sequence feature matrices {seq_id: (T, N_d)}."""
    out = {}
    for seq in dataset.sequences:
        rows = [
            extract_features(f, config.feature_kind, config.target_size, model, backbone_fn)
            for f in seq.frames
        ]
        out[seq.sequence_id] = np.stack(rows)
    dims = {m.shape[1] for m in out.values()}
    if len(dims) != 1:
        raise GraphError(f"inconsistent feature dimensions: {sorted(dims)}")
    return out


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=x.dtype)
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator, tol: float, max_iter: int):
    centroids = _kmeanspp_init(x, k, rng)
    for _ in range(max_iter):
        labels, _ = kernels.kmeans_assign(x, centroids)
        new_c = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_c[j] = x[members].mean(axis=0)
        empty = np.bincount(labels, minlength=k) == 0
        if empty.any():
            _, dist2 = kernels.kmeans_assign(x, new_c)
            for j in np.nonzero(empty)[0]:
                far = int(np.argmax(dist2))
                new_c[j] = x[far]
                dist2[far] = 0.0
        shift = np.sqrt(((new_c - centroids) ** 2).sum(axis=1)).max()
        centroids = new_c
        if shift < tol:
            break
    labels, dist2 = kernels.kmeans_assign(x, centroids)
    return centroids, labels, float(dist2.sum())


def kmeans(vectors, k: int, seed=0, tol: float = 1e-6, max_iter: int = 300, n_init: int = 10):
    """Best of n_init k-means++/Lloyd runs by inertia. Returns (centroids, labels)."""
    x = np.ascontiguousarray(np.asarray(vectors, dtype=np.float64))
    n = x.shape[0]
    if k > n:
        raise GraphError(f"k={k} exceeds the number of vectors ({n})")
    if k < 1:
        raise GraphError("k must be >= 1")
    rng = _as_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        centroids, labels, inertia = _lloyd(x, k, rng, tol, max_iter)
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia)
        if inertia <= 0:
            break
    return best[0], best[1]


@dataclass(eq=False)
class SequenceCentroids:
    sequence_id: str
    centroids: np.ndarray  # (N_l, N_d)
    padded: bool = False


def local_centroids(sequence_id: str, features: np.ndarray, n_local: int, seed=0) -> SequenceCentroids:
    """Intra-sequence k-means centroids; short sequences duplicate-pad."""
    t = features.shape[0]
    if t >= n_local:
        c, _ = kmeans(features, n_local, seed)
        return SequenceCentroids(sequence_id, c)
    c, _ = kmeans(features, t, seed)
    reps = [c[i % t] for i in range(n_local)]
    return SequenceCentroids(sequence_id, np.stack(reps), padded=True)


# ---------------------------------------------------------------------------
# Edge weights
# ---------------------------------------------------------------------------


def min_cost_assignment(cost) -> tuple[list[tuple[int, int]], float]:
    """Optimal one-to-one assignment of min(m, n) pairs minimizing total cost."""
    c = np.asarray(cost, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise GraphError("assignment costs must be finite")
    rows, cols = linear_sum_assignment(c)
    return list(zip(rows.tolist(), cols.tolist())), float(c[rows, cols].sum())


def dissimilarity_weight(ci: SequenceCentroids, cj: SequenceCentroids) -> float:
    """Min-assignment sum of centroid L2 distances over (N_p * N_d)."""
    if ci.centroids.shape[1] != cj.centroids.shape[1]:
        raise GraphError("centroid dimensionalities disagree")
    dist = cdist(ci.centroids, cj.centroids)
    _, total = min_cost_assignment(dist)
    n_p = min(ci.centroids.shape[0], cj.centroids.shape[0])
    n_d = ci.centroids.shape[1]
    return total / (n_p * n_d)


def similarity_weight(hist_i, hist_j) -> float:
    """Histogram intersection of normalized global-cluster occupancies."""
    hi = np.asarray(hist_i, dtype=np.float64)
    hj = np.asarray(hist_j, dtype=np.float64)
    if hi.shape != hj.shape:
        raise GraphError("histograms must cover the same clusters")
    if abs(hi.sum() - 1.0) > 1e-6 or abs(hj.sum() - 1.0) > 1e-6:
        raise GraphError("occupancy histograms must each sum to 1")
    return float(np.minimum(hi, hj).sum())


def edge_weight(w_plus: float, w_minus: float, lam: float) -> float:
    if w_plus < 0 or w_minus < 0:
        raise GraphError("weights must be non-negative")
    return max(lam * w_plus - w_minus, 0.0)


# ---------------------------------------------------------------------------
# Graph assembly
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SimilarityGraph:
    node_ids: list[str]
    w_plus: np.ndarray
    w_minus: np.ndarray
    w: np.ndarray
    confidence: np.ndarray
    lam: float
    config: Optional[GraphConfig] = None
    flags: dict = field(default_factory=dict)
    dataset_hash: str = ""

    def index(self, node_id: str) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise GraphError(f"unknown node {node_id!r}") from None

    def __len__(self) -> int:
        return len(self.node_ids)


def dataset_build_hash(dataset: Dataset) -> str:
    payload = {
        "ids": [s.sequence_id for s in dataset.sequences],
        "counts": [len(s.frames) for s in dataset.sequences],
        "seed": dataset.metadata.get("seed"),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def build_graph(dataset: Dataset, config: GraphConfig, model=None, backbone_fn=None) -> SimilarityGraph:
    """All pairwise W+, W-, W and the min-max normalized confidence."""
    n = len(dataset.sequences)
    if n < 2:
        raise GraphError("similarity graph needs >= 2 sequences")
    if config.n_global < n:
        raise GraphError(f"n_global ({config.n_global}) must be >= number of sequences ({n})")

    feats = dataset_features(dataset, config, model, backbone_fn)
    ids = [s.sequence_id for s in dataset.sequences]
    flags = {}

    cents = {
        sid: local_centroids(sid, feats[sid], config.n_local, seed=config.seed + 1)
        for sid in ids
    }
    if any(c.padded for c in cents.values()):
        flags["padded_local_centroids"] = [sid for sid in ids if cents[sid].padded]

    all_feats = np.concatenate([feats[sid] for sid in ids], axis=0)
    n_global = min(config.n_global, all_feats.shape[0])
    if n_global < config.n_global:
        flags["n_global_capped"] = n_global
    _, labels = kmeans(all_feats, n_global, seed=config.seed + 2)
    hists = {}
    start = 0
    for sid in ids:
        t = feats[sid].shape[0]
        hists[sid] = np.bincount(labels[start : start + t], minlength=n_global) / t
        start += t

    w_plus = np.zeros((n, n))
    w_minus = np.zeros((n, n))
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            wp = similarity_weight(hists[ids[i]], hists[ids[j]])
            wm = dissimilarity_weight(cents[ids[i]], cents[ids[j]])
            w_plus[i, j] = w_plus[j, i] = wp
            w_minus[i, j] = w_minus[j, i] = wm
            w[i, j] = w[j, i] = edge_weight(wp, wm, config.lam)

    off = ~np.eye(n, dtype=bool)
    lo, hi = w_minus[off].min(), w_minus[off].max()
    conf = np.zeros((n, n))
    if hi - lo <= 0:
        conf[off] = 1.0
        flags["confidence_degenerate"] = True
        log.warning("all pairwise dissimilarities equal; confidence fixed at 1")
    else:
        conf[off] = (w_minus[off] - lo) / (hi - lo)

    return SimilarityGraph(
        node_ids=ids,
        w_plus=w_plus,
        w_minus=w_minus,
        w=w,
        confidence=conf,
        lam=config.lam,
        config=config,
        flags=flags,
        dataset_hash=dataset_build_hash(dataset),
    )


# ---------------------------------------------------------------------------
# Random-walker sampling
# ---------------------------------------------------------------------------


def transition_distribution(g: SimilarityGraph, node: str) -> np.ndarray:
    """p_t over all nodes (0 at the anchor), proportional to edge weights."""
    i = g.index(node)
    row = g.w[i].copy()
    row[i] = 0.0
    total = row.sum()
    if total <= 0:
        log.warning("node %s has no outgoing weight; using a uniform transition", node)
        row[:] = 1.0
        row[i] = 0.0
        total = row.sum()
    return row / total


def sample_positive(g: SimilarityGraph, anchor: str, rng: np.random.Generator) -> str:
    """One random-walk step toward a probably-similar node."""
    p = transition_distribution(g, anchor)
    return g.node_ids[int(rng.choice(len(p), p=p))]


def sample_negative(g: SimilarityGraph, anchor: str, rng: np.random.Generator) -> tuple[str, float]:
    """Draw from the normalized complement (1 - p_t); returns (node, confidence)."""
    i = g.index(anchor)
    p = transition_distribution(g, anchor)
    q = 1.0 - p
    q[i] = 0.0
    total = q.sum()
    if total <= 0:
        q[:] = 1.0
        q[i] = 0.0
        total = q.sum()
    j = int(rng.choice(len(q), p=q / total))
    return g.node_ids[j], float(g.confidence[i, j])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def graph_to_json(g: SimilarityGraph) -> dict:
    return {
        "version": 1,
        "node_ids": g.node_ids,
        "lambda": g.lam,
        "w_plus": g.w_plus.tolist(),
        "w_minus": g.w_minus.tolist(),
        "w": g.w.tolist(),
        "confidence": g.confidence.tolist(),
        "config": g.config.to_dict() if g.config else None,
        "flags": g.flags,
        "dataset_hash": g.dataset_hash,
    }


def graph_from_json(obj: dict) -> SimilarityGraph:
    cfg = GraphConfig(**obj["config"]) if obj.get("config") else None
    return SimilarityGraph(
        node_ids=list(obj["node_ids"]),
        w_plus=np.asarray(obj["w_plus"], dtype=np.float64),
        w_minus=np.asarray(obj["w_minus"], dtype=np.float64),
        w=np.asarray(obj["w"], dtype=np.float64),
        confidence=np.asarray(obj["confidence"], dtype=np.float64),
        lam=float(obj["lambda"]),
        config=cfg,
        flags=obj.get("flags", {}),
        dataset_hash=obj.get("dataset_hash", ""),
    )


def save_graph(g: SimilarityGraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_json(g), indent=2))


def load_graph(path) -> SimilarityGraph:
    return graph_from_json(json.loads(Path(path).read_text()))
