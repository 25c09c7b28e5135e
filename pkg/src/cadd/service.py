"""Read-only HTTP service over datasets, models, heatmaps, and best matches."""

from __future__ import annotations

import hashlib
import io
import json
import threading
from collections import OrderedDict
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .data import load_composites, load_dataset
from .evaluate import best_match, distance_heatmap
from .model import descriptor_at, load_checkpoint

COMPOSITES_ID = "composites"


class _LRU:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
                return self._store[key]
        return None

    def put(self, key, value):
        with self._lock:
            self._store[key] = value
            self._store.move_to_end(key)
            while len(self._store) > self.capacity:
                self._store.popitem(last=False)


class PixelRef(BaseModel):
    seq: str
    frame: int
    u: float
    v: float


class FrameRef(BaseModel):
    seq: str
    frame: int


class DescriptorRequest(BaseModel):
    model: str
    seq: str
    frame: int
    u: float
    v: float


class MatchRequest(BaseModel):
    model: str
    source: PixelRef
    target: FrameRef


class ServiceState:
    """Immutable models + dataset with bounded descriptor/heatmap caches."""

    def __init__(self, data_root, checkpoint_paths: dict, graph_path=None, cache_size=64):
        self.dataset = load_dataset(data_root)
        self.composites = []
        if (Path(data_root) / COMPOSITES_ID).exists():
            self.composites = load_composites(data_root)
        self.checkpoints = {name: load_checkpoint(p) for name, p in checkpoint_paths.items()}
        self.graph_json = None
        if graph_path is not None:
            self.graph_json = json.loads(Path(graph_path).read_text())
        self.desc_cache = _LRU(cache_size)
        self.heatmaps = _LRU(256)

    # -- lookups ----------------------------------------------------------

    def model(self, name: str):
        if name not in self.checkpoints:
            raise HTTPException(404, f"unknown model {name!r}")
        return self.checkpoints[name].model

    def frame_rgb(self, seq: str, frame: int) -> np.ndarray:
        if seq == COMPOSITES_ID:
            if not self.composites:
                raise HTTPException(404, "no composites available")
            if not 0 <= frame < len(self.composites):
                raise HTTPException(404, f"unknown composite frame {frame}")
            return self.composites[frame].rgb
        try:
            s = self.dataset.by_id(seq)
        except KeyError:
            raise HTTPException(404, f"unknown sequence {seq!r}") from None
        if not 0 <= frame < len(s.frames):
            raise HTTPException(404, f"unknown frame {frame} of {seq!r}")
        return s.frames[frame].rgb

    def descriptors(self, model_name: str, seq: str, frame: int):
        key = (model_name, seq, frame)
        cached = self.desc_cache.get(key)
        if cached is not None:
            return cached
        desc = self.model(model_name).describe(self.frame_rgb(seq, frame))
        self.desc_cache.put(key, desc)
        return desc

    def descriptor_vector(self, model_name: str, seq: str, frame: int, u: float, v: float):
        desc = self.descriptors(model_name, seq, frame)
        h, w, _ = desc.values.shape
        ur, vr = int(round(u)), int(round(v))
        if not (0 <= ur < w and 0 <= vr < h):
            raise HTTPException(422, f"pixel ({u}, {v}) out of bounds for {w}x{h}")
        return descriptor_at(desc, (ur, vr))


def _png_response(rgb: np.ndarray) -> Response:
    ok, buf = cv2.imencode(".png", rgb[:, :, ::-1])
    if not ok:
        raise HTTPException(500, "png encoding failed")
    return Response(content=buf.tobytes(), media_type="image/png")


def create_app(data_root, checkpoints: dict, graph_path=None, cache_size: int = 64,
               ui_dir: Optional[Path] = None) -> FastAPI:
    state = ServiceState(data_root, checkpoints, graph_path, cache_size)
    app = FastAPI(title="cadd inference service")
    app.state.cadd = state

    @app.get("/api/models")
    def models():
        return {
            "models": [
                {
                    "name": name,
                    "variant": ckpt.train_meta.get("variant"),
                    "d_desc": ckpt.model.config.d_desc,
                }
                for name, ckpt in state.checkpoints.items()
            ]
        }

    @app.get("/api/sequences")
    def sequences():
        seqs = [
            {
                "id": s.sequence_id,
                "n_frames": len(s.frames),
                "category": s.true_category,
                "instance": s.true_instance_class,
            }
            for s in state.dataset.sequences
        ]
        if state.composites:
            seqs.append(
                {
                    "id": COMPOSITES_ID,
                    "n_frames": len(state.composites),
                    "category": None,
                    "instance": None,
                }
            )
        return {"sequences": seqs}

    @app.get("/api/frames")
    def frames(seq: str):
        if seq == COMPOSITES_ID:
            if not state.composites:
                raise HTTPException(404, "no composites available")
            w, h = state.composites[0].size
            return {"frames": list(range(len(state.composites))), "width": w, "height": h}
        try:
            s = state.dataset.by_id(seq)
        except KeyError:
            raise HTTPException(404, f"unknown sequence {seq!r}") from None
        return {
            "frames": [f.frame_id for f in s.frames],
            "width": s.frames[0].intrinsics.width,
            "height": s.frames[0].intrinsics.height,
        }

    @app.get("/api/image/{seq}/{frame}.png")
    def image(seq: str, frame: int):
        return _png_response(state.frame_rgb(seq, frame))

    @app.post("/api/descriptor")
    def descriptor(req: DescriptorRequest):
        vec = state.descriptor_vector(req.model, req.seq, req.frame, req.u, req.v)
        return {"descriptor": [float(x) for x in vec]}

    @app.post("/api/match")
    def match(req: MatchRequest):
        query = state.descriptor_vector(
            req.model, req.source.seq, req.source.frame, req.source.u, req.source.v
        )
        target = state.descriptors(req.model, req.target.seq, req.target.frame)
        pixel, dist = best_match(query, target)
        grid = distance_heatmap(query, target)
        hid = hashlib.sha1(
            "|".join(
                str(x)
                for x in (
                    req.model,
                    req.source.seq,
                    req.source.frame,
                    req.source.u,
                    req.source.v,
                    req.target.seq,
                    req.target.frame,
                )
            ).encode()
        ).hexdigest()[:16]
        state.heatmaps.put(hid, grid)
        return {
            "pixel": {"u": pixel.u, "v": pixel.v},
            "distance": dist,
            "heatmap_id": hid,
            "heatmap_min": float(grid.min()),
            "heatmap_max": float(grid.max()),
        }

    @app.get("/api/heatmap/{hid}.png")
    def heatmap(hid: str, format: Optional[str] = None):
        grid = state.heatmaps.get(hid)
        if grid is None:
            raise HTTPException(404, "unknown or expired heatmap id")
        if format == "f32":
            buf = io.BytesIO()
            np.save(buf, grid.astype(np.float32))
            return Response(content=buf.getvalue(), media_type="application/octet-stream")
        lo, hi = float(grid.min()), float(grid.max())
        norm = np.zeros_like(grid) if hi <= lo else (grid - lo) / (hi - lo)
        img = (norm * 255.0).round().astype(np.uint8)
        ok, buf = cv2.imencode(".png", img)
        if not ok:
            raise HTTPException(500, "png encoding failed")
        return Response(content=buf.tobytes(), media_type="image/png")

    @app.get("/api/graph")
    def graph():
        if state.graph_json is None:
            raise HTTPException(404, "no graph loaded")
        return state.graph_json

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
