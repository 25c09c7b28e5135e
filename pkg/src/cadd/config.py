"""Layered run configuration: defaults < config file < CLI flags.

Stock training defaults: 3,500 iterations, 5 descriptor dimensions, learning
rate 1e-4 with 0.9 decay, margin 0.5, 5 local and 300 global clusters,
lambda 0.1, 500 projection steps. Unknown keys anywhere in the tree are
rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data.synthetic import default_scene_spec
from .data.types import CategorySpec, SceneSpec
from .geometry import AugmentationSpec
from .graph import GraphConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalOptions:
    n_composites: int = 20
    n_transfer_pairs: int = 60
    queries_per_instance: int = 3
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    seed: int
    scene: SceneSpec
    graph: GraphConfig
    train: TrainConfig
    eval: EvalOptions

    def resolved(self) -> dict:
        return {
            "seed": self.seed,
            "scene": _as_plain(self.scene),
            "graph": _as_plain(self.graph),
            "train": _as_plain(self.train),
            "eval": _as_plain(self.eval),
        }


def _as_plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _as_plain(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(v) for v in obj]
    return obj


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build(cls, overrides: dict, where: str, base=None):
    if not isinstance(overrides, dict):
        raise ConfigError(f"{where}: expected an object, got {type(overrides).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in overrides.items():
        if name == "categories":
            value = tuple(_build(CategorySpec, c, f"{where}.categories[]") for c in value)
        elif name == "augmentation" and isinstance(value, dict):
            value = _build(AugmentationSpec, value, f"{where}.augmentation")
        else:
            value = _tuplify(value)
        kwargs[name] = value
    try:
        if base is not None:
            return dataclasses.replace(base, **kwargs)
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


_SECTIONS = ("scene", "graph", "train", "eval")


def load_run_config(config_path=None, overrides: dict | None = None) -> RunConfig:
    """Merge a JSON config file and flag overrides over the defaults."""
    tree: dict = {}
    if config_path is not None:
        p = Path(config_path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            tree = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
        if not isinstance(tree, dict):
            raise ConfigError("config root must be an object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            tree.setdefault(section, {})[name] = value
        else:
            tree[key] = value

    unknown = set(tree) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    seed = tree.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    for section in _SECTIONS:
        tree.setdefault(section, {})
        if not isinstance(tree[section], dict):
            raise ConfigError(f"{section}: expected an object")
    # propagate the top-level seed into sections that do not pin their own
    for section in ("scene", "graph", "train", "eval"):
        tree[section].setdefault("seed", seed)

    scene = _build(SceneSpec, tree["scene"], "scene", base=default_scene_spec(seed))
    graph = _build(GraphConfig, tree["graph"], "graph")
    train = _build(TrainConfig, tree["train"], "train")
    ev = _build(EvalOptions, tree["eval"], "eval")
    return RunConfig(seed=seed, scene=scene, graph=graph, train=train, eval=ev)
