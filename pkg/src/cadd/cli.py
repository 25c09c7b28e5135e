"""Command-line entry point: gen-data | build-graph | train | eval | export | serve."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_run_config

log = logging.getLogger("cadd")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file merged over the defaults")
    p.add_argument("--seed", type=int, help="override the top-level seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cadd", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic multi-view dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="dataset output directory")

    p = sub.add_parser("build-graph", help="build the sequence similarity graph")
    _add_common(p)
    p.add_argument("--data", default=os.environ.get("CADD_DATA_ROOT"))
    p.add_argument("--out", required=True, help="graph JSON output path")
    p.add_argument("--checkpoints", help="checkpoint for masked_descriptor features")

    p = sub.add_parser("train", help="train a descriptor model")
    _add_common(p)
    p.add_argument("--variant", choices=["vanilla", "hard", "soft"])
    p.add_argument("--data", default=os.environ.get("CADD_DATA_ROOT"))
    p.add_argument("--graph", help="graph JSON (required for hard/soft)")
    p.add_argument("--out", required=True, help="output directory for checkpoint + log")
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("eval", help="comparative metrics report")
    _add_common(p)
    p.add_argument("--checkpoints", required=True,
                   help="comma-separated checkpoints, each 'path' or 'name=path'")
    p.add_argument("--data", default=os.environ.get("CADD_DATA_ROOT"))
    p.add_argument("--report", required=True, help="report JSON output path")

    p = sub.add_parser("export", help="export sampled on-object descriptors as CSV")
    _add_common(p)
    p.add_argument("--checkpoints", required=True, help="checkpoint to export from")
    p.add_argument("--data", default=os.environ.get("CADD_DATA_ROOT"))
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--pixels", type=int, default=400)

    p = sub.add_parser("serve", help="run the read-only inference service")
    _add_common(p)
    p.add_argument("--data", default=os.environ.get("CADD_DATA_ROOT"))
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--graph")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="static UI bundle directory (defaults to bundled frontend)")
    return ap


def _effective_config(args):
    overrides = {"seed": getattr(args, "seed", None)}
    if getattr(args, "variant", None):
        overrides["train.variant"] = args.variant
    if getattr(args, "iterations", None):
        overrides["train.iterations"] = args.iterations
    cfg = load_run_config(getattr(args, "config", None), overrides)
    print("effective config:", json.dumps(cfg.resolved(), sort_keys=True))
    return cfg


def _require_data(args) -> Path:
    if not args.data:
        raise ConfigError("--data is required (or set CADD_DATA_ROOT)")
    root = Path(args.data)
    if not (root / "dataset.json").exists():
        raise ConfigError(f"no dataset found under {root}")
    return root


def _parse_checkpoints(spec: str) -> dict[str, Path]:
    out = {}
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" in item:
            name, path = item.split("=", 1)
        else:
            path = item
            name = Path(item).stem
        if name in out:
            raise ConfigError(f"duplicate checkpoint name {name!r}")
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"checkpoint not found: {p}")
        out[name] = p
    if not out:
        raise ConfigError("no checkpoints given")
    return out


def cmd_gen_data(args) -> int:
    from .data import generate_synthetic_dataset, make_two_object_composites, save_composites, save_dataset

    cfg = _effective_config(args)
    dataset = generate_synthetic_dataset(cfg.scene)
    out = Path(args.out)
    save_dataset(dataset, out)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.eval.seed, 10)))
    composites = make_two_object_composites(dataset, cfg.eval.n_composites, rng)
    save_composites(composites, out)
    n_frames = sum(len(s.frames) for s in dataset.sequences)
    print(f"wrote {len(dataset.sequences)} sequences / {n_frames} frames to {out}")
    return 0


def cmd_build_graph(args) -> int:
    from .data import load_dataset
    from .graph import build_graph, save_graph
    from .model import load_checkpoint

    cfg = _effective_config(args)
    dataset = load_dataset(_require_data(args))
    model = None
    if cfg.graph.feature_kind == "masked_descriptor":
        if not args.checkpoints:
            raise ConfigError("masked_descriptor features need --checkpoints")
        model = load_checkpoint(args.checkpoints).model
    g = build_graph(dataset, cfg.graph, model=model)
    save_graph(g, args.out)
    print(f"graph over {len(g)} sequences written to {args.out} (flags: {g.flags})")
    return 0


def cmd_train(args) -> int:
    from .data import load_dataset
    from .graph import load_graph
    from .train import train_hard, train_soft, train_vanilla

    cfg = _effective_config(args)
    dataset = load_dataset(_require_data(args))
    variant = cfg.train.variant
    if variant in ("hard", "soft") and not args.graph:
        raise ConfigError(f"variant {variant!r} requires --graph")
    t0 = time.time()
    if variant == "vanilla":
        result = train_vanilla(dataset, cfg.train, out_dir=args.out)
    elif variant == "soft":
        result = train_soft(dataset, cfg.train, load_graph(args.graph), out_dir=args.out)
    else:
        result = train_hard(dataset, cfg.train, load_graph(args.graph), out_dir=args.out)
    print(
        f"trained {variant} for {result.state.step} steps "
        f"({result.state.skipped} skips) in {time.time() - t0:.1f}s -> {result.checkpoint_path}"
    )
    return 0


def cmd_eval(args) -> int:
    from .data import load_dataset
    from .evaluate import CdfResult, evaluation_report, plot_cdfs
    from .model import load_checkpoint

    cfg = _effective_config(args)
    dataset = load_dataset(_require_data(args))
    models = {name: load_checkpoint(p).model for name, p in _parse_checkpoints(args.checkpoints).items()}
    report = evaluation_report(
        dataset,
        models,
        n_composites=cfg.eval.n_composites,
        n_transfer_pairs=cfg.eval.n_transfer_pairs,
        queries_per_instance=cfg.eval.queries_per_instance,
        seed=cfg.eval.seed,
    )
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    plot_path = report_path.with_suffix(".cdf.png")
    plot_cdfs(
        {
            name: CdfResult(np.asarray(m["keypoint_transfer"]["errors"]))
            for name, m in report["models"].items()
        },
        plot_path,
    )
    report["plots"] = {"cdf": plot_path.name}
    report["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True))
    for name, m in report["models"].items():
        print(
            f"{name}: on_object_rate={m['on_object_match_rate']:.3f} "
            f"transfer_auc={m['keypoint_transfer']['auc']:.3f}"
        )
    print(f"report written to {report_path}")
    return 0


def cmd_export(args) -> int:
    from .data import load_dataset
    from .evaluate import export_descriptor_samples
    from .model import load_checkpoint

    cfg = _effective_config(args)
    dataset = load_dataset(_require_data(args))
    ckpts = _parse_checkpoints(args.checkpoints)
    if len(ckpts) != 1:
        raise ConfigError("export takes exactly one checkpoint")
    model = load_checkpoint(next(iter(ckpts.values()))).model
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 20)))
    all_frames = [(s, f) for s in dataset.sequences for f in s.frames]
    idx = rng.choice(len(all_frames), size=min(args.frames, len(all_frames)), replace=False)
    descs, rows = export_descriptor_samples(
        model, [all_frames[int(i)] for i in idx], args.pixels, rng
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = descs.shape[1] if descs.size else model.config.d_desc
        writer.writerow(
            ["sequence_id", "instance", "category", "frame_id", "u", "v"]
            + [f"d{i}" for i in range(d)]
        )
        for row, vec in zip(rows, descs):
            writer.writerow(
                [row["sequence_id"], row["instance"], row["category"], row["frame_id"],
                 row["u"], row["v"]] + [f"{x:.6g}" for x in vec]
            )
    print(f"wrote {len(rows)} descriptor samples to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    _effective_config(args)
    ui_dir = args.ui
    if ui_dir is None:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        ui_dir = bundled if bundled.exists() else None
    app = create_app(
        _require_data(args),
        _parse_checkpoints(args.checkpoints),
        graph_path=args.graph,
        ui_dir=ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "eval": cmd_eval,
    "export": cmd_export,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        log.exception("command failed: %s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
