"""Hard-label classification head: projection network trained with a
confidence-scaled triplet loss, then K-means discretization into classes."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .graph import GraphError, SimilarityGraph, kmeans, sample_negative, sample_positive
from .nn import Adam, Linear, ReLU, Sequential

log = logging.getLogger(__name__)


class ProjectionNetwork:
    """Two fully connected layers; rectified hidden activations."""

    def __init__(self, d_in: int, d_hidden: int = 256, d_out: int = 64, rng=None):
        rng = rng or np.random.default_rng()
        self.dims = (d_in, d_hidden, d_out)
        self.net = Sequential([Linear(d_in, d_hidden, rng=rng), ReLU(), Linear(d_hidden, d_out, rng=rng)])

    def project(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float32)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.dims[0]:
            raise GraphError(f"expected {self.dims[0]}-dim features, got {x.shape[1]}")
        y = self.net.infer(x)
        return y[0] if single else y

    def forward_train(self, x: np.ndarray):
        return self.net.forward_train(np.asarray(x, dtype=np.float32))

    def backward(self, cache, dy: np.ndarray) -> dict:
        _, grads = self.net.backward(cache, dy.astype(np.float32))
        return grads

    def named_params(self):
        return self.net.named_params()

    def state_dict(self):
        return self.net.state_dict()

    def load_state_dict(self, state):
        self.net.load_state_dict(state)


def project(net: ProjectionNetwork, features: np.ndarray) -> np.ndarray:
    """Continuous latent class representation of one or more feature vectors."""
    return net.project(features)


def hard_triplet_loss(a, p, n, c: float, margin: float) -> float:
    """relu(||a - p|| - ||a - n|| + c * margin)."""
    if not 0.0 <= c <= 1.0:
        raise GraphError("confidence must be in [0, 1]")
    if margin <= 0:
        raise GraphError("margin must be positive")
    a = np.asarray(a, dtype=np.float64)
    d_pos = float(np.linalg.norm(a - np.asarray(p, dtype=np.float64)))
    d_neg = float(np.linalg.norm(a - np.asarray(n, dtype=np.float64)))
    return max(0.0, d_pos - d_neg + c * margin)


def hard_triplet_loss_grad(a, p, n, c: float, margin: float):
    """(loss, da, dp, dn); subgradient 0 at the hinge kink and zero norms."""
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    ap = a - p
    an = a - n
    d_pos = float(np.linalg.norm(ap))
    d_neg = float(np.linalg.norm(an))
    loss = d_pos - d_neg + c * margin
    da, dp, dn = np.zeros_like(a), np.zeros_like(p), np.zeros_like(n)
    if loss <= 0:
        return 0.0, da, dp, dn
    if d_pos > 0:
        u = ap / d_pos
        da += u
        dp -= u
    if d_neg > 0:
        u = an / d_neg
        da -= u
        dn += u
    return loss, da, dp, dn


def train_projection(
    graph: SimilarityGraph,
    features_by_seq: dict[str, np.ndarray],
    steps: int = 500,
    lr: float = 1e-4,
    decay: float = 0.9,
    decay_interval: int = 250,
    margin: float = 0.5,
    d_hidden: int = 256,
    d_out: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> ProjectionNetwork:
    """Triplet training over graph-sampled (anchor, positive, negative) nodes."""
    rng = rng or np.random.default_rng()
    missing = [nid for nid in graph.node_ids if nid not in features_by_seq]
    if missing:
        raise GraphError(f"features missing for graph nodes {missing}")
    d_in = next(iter(features_by_seq.values())).shape[1]
    net = ProjectionNetwork(d_in, d_hidden, d_out, rng=rng)
    if steps == 0:
        return net
    opt = Adam(net.named_params(), lr0=lr, decay=decay, decay_interval=decay_interval)

    def pick(seq_id):
        feats = features_by_seq[seq_id]
        return feats[rng.integers(feats.shape[0])]

    for step in range(steps):
        anchor = graph.node_ids[rng.integers(len(graph.node_ids))]
        pos = sample_positive(graph, anchor, rng)
        neg, conf = sample_negative(graph, anchor, rng)
        batch = np.stack([pick(anchor), pick(pos), pick(neg)]).astype(np.float32)
        emb, cache = net.forward_train(batch)
        loss, da, dp, dn = hard_triplet_loss_grad(emb[0], emb[1], emb[2], conf, margin)
        if not np.isfinite(loss):
            raise GraphError(f"non-finite projection loss at step {step}")
        grads_out = np.stack([da, dp, dn]).astype(np.float32)
        opt.step(net.backward(cache, grads_out))
    return net


@dataclass(eq=False)
class ClassModel:
    """K cluster centroids in projection space."""

    centroids: np.ndarray

    def __post_init__(self):
        k = self.centroids.shape[0]
        for i in range(k):
            for j in range(i + 1, k):
                if np.array_equal(self.centroids[i], self.centroids[j]):
                    raise GraphError("class centroids must be distinct")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def fit_classes(net: ProjectionNetwork, features: np.ndarray, k: int, seed=0) -> ClassModel:
    """Discretize projected training features into K latent classes."""
    if k < 2:
        raise GraphError("need at least K=2 classes")
    feats = np.asarray(features, dtype=np.float32)
    if k > feats.shape[0]:
        raise GraphError(f"K={k} exceeds the number of samples ({feats.shape[0]})")
    emb = net.project(feats)
    centroids, _ = kmeans(emb, k, seed)
    return ClassModel(centroids=centroids)


def assign_class(net: ProjectionNetwork, class_model: ClassModel, features: np.ndarray):
    """Nearest-centroid class index (ties resolve to the lowest index)."""
    emb = net.project(np.asarray(features, dtype=np.float32))
    single = emb.ndim == 1
    x = np.ascontiguousarray(np.atleast_2d(emb), dtype=np.float64)
    labels, _ = kernels.kmeans_assign(x, np.ascontiguousarray(class_model.centroids, dtype=np.float64))
    return int(labels[0]) if single else labels
