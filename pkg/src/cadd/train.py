"""End-to-end training regimes: vanilla, hard phase two, and soft."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .data.types import Dataset, Frame, Sequence
from .geometry import (
    AugmentationSpec,
    GeometryError,
    PixelRemap,
    apply_augmentations,
    find_matches,
    sample_nonmatches,
)
from .graph import GraphConfig, SimilarityGraph, dataset_features, extract_features, sample_negative
from .hard import ClassModel, ProjectionNetwork, assign_class, fit_classes, train_projection
from .model import (
    DescriptorNet,
    ModelConfig,
    match_loss_grad,
    nonmatch_loss_grad,
    save_checkpoint,
)
from .nn import Adam, add_grads

log = logging.getLogger(__name__)

VARIANTS = ("vanilla", "hard", "soft")


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "vanilla"
    iterations: int = 3500
    lr: float = 1e-4
    decay: float = 0.9
    decay_interval: int = 250
    margin: float = 0.5
    d_desc: int = 5
    n_matches: int = 512
    nonmatches_per_match: int = 16
    cross_nonmatches: int = 2048
    depth_tolerance: float = 0.003
    exclusion_radius: float = 5.0
    augment: bool = True
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    projection_steps: int = 500
    hard_k: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(d_desc=self.d_desc)


@dataclass
class TrainState:
    step: int = 0
    history: list = field(default_factory=list)
    skipped: int = 0

    def record(self, entry: dict):
        self.history.append(entry)
        self.step += 1


@dataclass(eq=False)
class TrainResult:
    model: DescriptorNet
    state: TrainState
    config: TrainConfig
    checkpoint_path: Optional[Path] = None
    log_path: Optional[Path] = None
    projection: Optional[ProjectionNetwork] = None
    class_model: Optional[ClassModel] = None


def soft_total_loss(pos_match: float, pos_nonmatch: float, neg_nonmatch: float, c: float) -> float:
    """pos_nonmatch + pos_match + c * neg_nonmatch."""
    if min(pos_match, pos_nonmatch, neg_nonmatch) < 0:
        raise ValueError("loss components must be non-negative")
    if not 0.0 <= c <= 1.0:
        raise ValueError("confidence must be in [0, 1]")
    return pos_nonmatch + pos_match + c * neg_nonmatch


# ---------------------------------------------------------------------------
# Hard-variant pair sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairInstruction:
    kind: str  # "same" | "cross" | "skip"
    seq_a: str
    frame_a: int
    seq_b: str
    frame_b: int


class HardClassifierBundle:
    """Frozen projection + class centroids with per-frame assignment caching."""

    def __init__(self, projection: ProjectionNetwork, classes: ClassModel,
                 graph_config: GraphConfig, feature_model=None):
        self.projection = projection
        self.classes = classes
        self.graph_config = graph_config
        self.feature_model = feature_model
        self._cache: dict[tuple[str, int], int] = {}

    def class_of(self, seq: Sequence, frame: Frame) -> int:
        key = (seq.sequence_id, frame.frame_id)
        if key not in self._cache:
            feats = extract_features(
                frame,
                self.graph_config.feature_kind,
                self.graph_config.target_size,
                model=self.feature_model,
            )
            self._cache[key] = int(assign_class(self.projection, self.classes, feats))
        return self._cache[key]


def sample_pair_hard_phase2(dataset: Dataset, classifier, rng: np.random.Generator) -> PairInstruction:
    """Same-sequence pair or cross-sequence pair with equal probability.

    Cross pairs whose inferred classes agree come back as kind "skip".
    classifier exposes class_of(sequence, frame) -> hashable.
    """
    seqs = dataset.sequences
    same = len(seqs) < 2 or rng.random() < 0.5
    if same:
        seq = seqs[rng.integers(len(seqs))]
        ia, ib = rng.choice(len(seq.frames), size=2, replace=False)
        return PairInstruction("same", seq.sequence_id, int(ia), seq.sequence_id, int(ib))
    i, j = rng.choice(len(seqs), size=2, replace=False)
    sa, sb = seqs[int(i)], seqs[int(j)]
    fa = int(rng.integers(len(sa.frames)))
    fb = int(rng.integers(len(sb.frames)))
    kind = "cross"
    if classifier.class_of(sa, sa.frames[fa]) == classifier.class_of(sb, sb.frames[fb]):
        kind = "skip"
    return PairInstruction(kind, sa.sequence_id, fa, sb.sequence_id, fb)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _gather(out: np.ndarray, pix: np.ndarray) -> np.ndarray:
    """out (D, H, W), pix (N, 2) int -> (N, D) float64."""
    return out[:, pix[:, 1], pix[:, 0]].T.astype(np.float64)


class _Loop:
    def __init__(self, dataset: Dataset, config: TrainConfig):
        self.dataset = dataset
        self.cfg = config
        self.rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
        init_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0)))
        self.model = DescriptorNet(config.model_config(), rng=init_rng)
        self.adam = Adam(
            self.model.named_params(),
            lr0=config.lr,
            decay=config.decay,
            decay_interval=config.decay_interval,
        )
        self.state = TrainState()

    # -- sampling helpers -------------------------------------------------

    def _augment(self, frame: Frame):
        if not self.cfg.augment:
            return frame.rgb, PixelRemap((1.0, 1.0), (0.0, 0.0), frame.size), frame.mask
        return apply_augmentations(frame, self.cfg.augmentation, self.rng)

    def _transport(self, pixels, remap: PixelRemap):
        moved = remap.apply(pixels)
        ok = remap.in_bounds(moved)
        return np.round(moved).astype(np.int64), ok

    def random_sequence(self) -> Sequence:
        return self.dataset.sequences[self.rng.integers(len(self.dataset.sequences))]

    def random_frames(self, seq: Sequence, k: int = 2):
        idx = self.rng.choice(len(seq.frames), size=k, replace=False)
        return [seq.frames[int(i)] for i in idx]

    # -- per-step computations --------------------------------------------

    def pair_step(self, fa: Frame, fb: Frame, fn: Optional[Frame] = None, conf: float = 1.0):
        """Positive pair (fa, fb) with optional confidence-weighted negative fn.

        Returns (losses dict, named grads) or None to signal a skipped pair.
        """
        cfg = self.cfg
        matches = find_matches(fa, fb, cfg.n_matches, cfg.depth_tolerance, self.rng)
        if len(matches) == 0:
            return None
        n_nm = len(matches) * cfg.nonmatches_per_match
        nonmatches = sample_nonmatches(
            fa, fb, n_nm, "anywhere", cfg.exclusion_radius, self.rng
        )
        try:
            rgb_a, remap_a, _ = self._augment(fa)
            rgb_b, remap_b, _ = self._augment(fb)
        except GeometryError:
            return None
        ma, ok_ma = self._transport(matches.pixels_a, remap_a)
        mb, ok_mb = self._transport(matches.pixels_b, remap_b)
        keep = ok_ma & ok_mb
        ma, mb = ma[keep], mb[keep]
        if ma.shape[0] == 0:
            return None
        na, ok_na = self._transport(nonmatches.pixels_a, remap_a)
        nb, ok_nb = self._transport(nonmatches.pixels_b, remap_b)
        keep = ok_na & ok_nb
        na, nb = na[keep], nb[keep]

        cross_a = cross_n = None
        rgb_n = remap_n = None
        if fn is not None:
            cross = sample_nonmatches(fa, fn, cfg.cross_nonmatches, "on_object", 0.0, self.rng)
            try:
                rgb_n, remap_n, _ = self._augment(fn)
            except GeometryError:
                return None
            ca, ok_ca = self._transport(cross.pixels_a, remap_a)
            cn, ok_cn = self._transport(cross.pixels_b, remap_n)
            keep = ok_ca & ok_cn
            cross_a, cross_n = ca[keep], cn[keep]

        out_a, cache_a = self.model.forward_train(rgb_a)
        out_b, cache_b = self.model.forward_train(rgb_b)
        l_match, g_ma, g_mb = match_loss_grad(_gather(out_a, ma), _gather(out_b, mb))
        l_nm, g_na, g_nb = nonmatch_loss_grad(
            _gather(out_a, na), _gather(out_b, nb), cfg.margin
        )
        dout_a = np.zeros_like(out_a)
        dout_b = np.zeros_like(out_b)
        self._scatter(dout_a, ma, g_ma)
        self._scatter(dout_a, na, g_na)
        self._scatter(dout_b, mb, g_mb)
        self._scatter(dout_b, nb, g_nb)

        l_neg = 0.0
        grads_n = None
        if fn is not None and cross_a.shape[0] > 0:
            out_n, cache_n = self.model.forward_train(rgb_n)
            l_neg, g_ca, g_cn = nonmatch_loss_grad(
                _gather(out_a, cross_a), _gather(out_n, cross_n), cfg.margin
            )
            self._scatter(dout_a, cross_a, conf * g_ca)
            dout_n = np.zeros_like(out_n)
            self._scatter(dout_n, cross_n, conf * g_cn)
            grads_n = self.model.backward(cache_n, dout_n)

        grads = add_grads(None, self.model.backward(cache_a, dout_a))
        grads = add_grads(grads, self.model.backward(cache_b, dout_b))
        if grads_n is not None:
            grads = add_grads(grads, grads_n)

        losses = {
            "loss_match": l_match,
            "loss_nonmatch_pos": l_nm,
            "loss_nonmatch_neg": l_neg,
            "confidence": conf if fn is not None else None,
        }
        return losses, grads

    def cross_step(self, fa: Frame, fb: Frame):
        """Cross-sequence repulsion only (hard phase two, different classes)."""
        cfg = self.cfg
        cross = sample_nonmatches(fa, fb, cfg.cross_nonmatches, "on_object", 0.0, self.rng)
        try:
            rgb_a, remap_a, _ = self._augment(fa)
            rgb_b, remap_b, _ = self._augment(fb)
        except GeometryError:
            return None
        ca, ok_a = self._transport(cross.pixels_a, remap_a)
        cb, ok_b = self._transport(cross.pixels_b, remap_b)
        keep = ok_a & ok_b
        ca, cb = ca[keep], cb[keep]
        if ca.shape[0] == 0:
            return None
        out_a, cache_a = self.model.forward_train(rgb_a)
        out_b, cache_b = self.model.forward_train(rgb_b)
        l_neg, g_a, g_b = nonmatch_loss_grad(
            _gather(out_a, ca), _gather(out_b, cb), cfg.margin
        )
        dout_a = np.zeros_like(out_a)
        dout_b = np.zeros_like(out_b)
        self._scatter(dout_a, ca, g_a)
        self._scatter(dout_b, cb, g_b)
        grads = add_grads(None, self.model.backward(cache_a, dout_a))
        grads = add_grads(grads, self.model.backward(cache_b, dout_b))
        losses = {
            "loss_match": 0.0,
            "loss_nonmatch_pos": 0.0,
            "loss_nonmatch_neg": l_neg,
            "confidence": None,
        }
        return losses, grads

    @staticmethod
    def _scatter(dout, pix, grads):
        kernels.scatter_add_chw(
            dout,
            np.ascontiguousarray(pix[:, 1]),
            np.ascontiguousarray(pix[:, 0]),
            np.ascontiguousarray(grads, dtype=dout.dtype),
        )

    # -- driver ------------------------------------------------------------

    def run(self, step_fn, log_file=None):
        cfg = self.cfg
        attempts = 0
        while self.state.step < cfg.iterations:
            result = step_fn()
            if result is None:
                self.state.skipped += 1
                attempts += 1
                if attempts > 200:
                    raise TrainError("no trainable pair found in 200 consecutive attempts")
                continue
            losses, grads = result
            total = (
                losses["loss_match"]
                + losses["loss_nonmatch_pos"]
                + (losses["confidence"] if losses["confidence"] is not None else 1.0)
                * losses["loss_nonmatch_neg"]
            )
            if not np.isfinite(total) or total < 0:
                raise TrainError(f"bad total loss {total} at step {self.state.step}")
            lr = self.adam.step(grads)
            entry = {
                "step": self.state.step,
                "loss_match": losses["loss_match"],
                "loss_nonmatch_pos": losses["loss_nonmatch_pos"],
                "loss_nonmatch_neg": losses["loss_nonmatch_neg"],
                "confidence": losses["confidence"],
                "loss_total": total,
                "lr": lr,
                "skips": attempts,
            }
            attempts = 0
            self.state.record(entry)
            if log_file is not None:
                log_file.write(json.dumps(entry) + "\n")
            if self.state.step % 500 == 0 or self.state.step == cfg.iterations:
                log.info(
                    "step %d/%d loss=%.4f lr=%.2e",
                    self.state.step,
                    cfg.iterations,
                    total,
                    lr,
                )


def _run_variant(dataset, config, step_factory, out_dir, *, projection=None,
                 class_model=None, feature_kind=None) -> TrainResult:
    loop = step_factory.loop
    out_dir = Path(out_dir) if out_dir is not None else None
    log_path = ckpt_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.jsonl"
        with open(log_path, "w", buffering=1) as fh:
            loop.run(step_factory, log_file=fh)
    else:
        loop.run(step_factory)
    if out_dir is not None:
        ckpt_path = out_dir / "checkpoint.npz"
        save_checkpoint(
            ckpt_path,
            loop.model,
            train_meta={
                "variant": config.variant,
                "iterations": config.iterations,
                "seed": config.seed,
                "skipped": loop.state.skipped,
            },
            projection=projection,
            class_model=class_model,
            feature_kind=feature_kind,
        )
    return TrainResult(
        model=loop.model,
        state=loop.state,
        config=config,
        checkpoint_path=ckpt_path,
        log_path=log_path,
        projection=projection,
        class_model=class_model,
    )


class _VanillaStep:
    def __init__(self, loop: _Loop):
        self.loop = loop

    def __call__(self):
        seq = self.loop.random_sequence()
        fa, fb = self.loop.random_frames(seq)
        return self.loop.pair_step(fa, fb)


class _SoftStep:
    def __init__(self, loop: _Loop, graph: SimilarityGraph):
        self.loop = loop
        self.graph = graph

    def __call__(self):
        loop = self.loop
        seq = loop.random_sequence()
        fa, fb = loop.random_frames(seq)
        neg_id, conf = sample_negative(self.graph, seq.sequence_id, loop.rng)
        neg_seq = loop.dataset.by_id(neg_id)
        fn = neg_seq.frames[int(loop.rng.integers(len(neg_seq.frames)))]
        return loop.pair_step(fa, fb, fn=fn, conf=conf)


class _HardStep:
    def __init__(self, loop: _Loop, classifier):
        self.loop = loop
        self.classifier = classifier

    def __call__(self):
        loop = self.loop
        inst = sample_pair_hard_phase2(loop.dataset, self.classifier, loop.rng)
        if inst.kind == "skip":
            return None
        sa = loop.dataset.by_id(inst.seq_a)
        sb = loop.dataset.by_id(inst.seq_b)
        fa = sa.frames[inst.frame_a]
        fb = sb.frames[inst.frame_b]
        if inst.kind == "same":
            return loop.pair_step(fa, fb)
        return loop.cross_step(fa, fb)


def train_vanilla(dataset: Dataset, config: TrainConfig, out_dir=None) -> TrainResult:
    """Per step: one sequence, two augmented frames, match + non-match losses."""
    config = replace(config, variant="vanilla")
    loop = _Loop(dataset, config)
    return _run_variant(dataset, config, _VanillaStep(loop), out_dir)


def train_soft(dataset: Dataset, config: TrainConfig, graph: SimilarityGraph, out_dir=None) -> TrainResult:
    """Anchor/positive pair plus a graph-sampled negative sequence, its
    repulsion scaled by the pairing's dissimilarity confidence."""
    config = replace(config, variant="soft")
    missing = [s.sequence_id for s in dataset.sequences if s.sequence_id not in graph.node_ids]
    if missing:
        raise TrainError(f"graph lacks nodes for sequences {missing}")
    loop = _Loop(dataset, config)
    return _run_variant(dataset, config, _SoftStep(loop, graph), out_dir)


def train_hard(
    dataset: Dataset,
    config: TrainConfig,
    graph: SimilarityGraph,
    out_dir=None,
    classifier=None,
    feature_model=None,
) -> TrainResult:
    """Phase one trains the projection head and fits K classes; phase two
    mixes same-sequence pairs with cross-class repulsion pairs.

    A pre-built classifier (anything with class_of(sequence, frame)) skips
    phase one; the ground-truth upper baseline injects one here.
    """
    config = replace(config, variant="hard")
    if graph.config is None:
        raise TrainError("hard training needs the graph's build config for features")
    projection = class_model = None
    feature_kind = graph.config.feature_kind
    if classifier is None:
        feats = dataset_features(dataset, graph.config, model=feature_model)
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, 2)))
        projection = train_projection(
            graph,
            feats,
            steps=config.projection_steps,
            lr=config.lr,
            decay=config.decay,
            decay_interval=config.decay_interval,
            margin=config.margin,
            rng=rng,
        )
        all_feats = np.concatenate([feats[s.sequence_id] for s in dataset.sequences])
        class_model = fit_classes(projection, all_feats, config.hard_k, seed=config.seed + 3)
        classifier = HardClassifierBundle(projection, class_model, graph.config, feature_model)
    loop = _Loop(dataset, config)
    return _run_variant(
        dataset,
        config,
        _HardStep(loop, classifier),
        out_dir,
        projection=projection,
        class_model=class_model,
        feature_kind=feature_kind,
    )
