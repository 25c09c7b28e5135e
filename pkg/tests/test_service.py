import io
import json

import cv2
import numpy as np
import pytest
from fastapi.testclient import TestClient

from cadd.data import generate_synthetic_dataset, default_scene_spec, make_two_object_composites, save_composites, save_dataset
from cadd.evaluate import best_match
from cadd.graph import GraphConfig, build_graph, save_graph
from cadd.model import load_checkpoint, save_checkpoint, DescriptorNet, ModelConfig
from cadd.service import create_app


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc_data")
    ds = generate_synthetic_dataset(
        default_scene_spec(seed=9, instances_per_category=1, n_views=4, image_size=(48, 48))
    )
    save_dataset(ds, root)
    save_composites(make_two_object_composites(ds, 2, np.random.default_rng(0)), root)
    ckpt = root / "model.npz"
    save_checkpoint(ckpt, DescriptorNet(ModelConfig(), rng=np.random.default_rng(1)),
                    train_meta={"variant": "vanilla"})
    graph_path = root / "graph.json"
    save_graph(build_graph(ds, GraphConfig(n_global=4, target_size=8, seed=0)), graph_path)
    app = create_app(root, {"vanilla": ckpt}, graph_path=graph_path, cache_size=8)
    client = TestClient(app)
    return client, ds, ckpt


class TestEndpoints:
    def test_models(self, service):
        client, _, _ = service
        got = client.get("/api/models").json()
        assert got["models"][0]["name"] == "vanilla"
        assert got["models"][0]["d_desc"] == 5

    def test_sequences_and_frames(self, service):
        client, ds, _ = service
        seqs = client.get("/api/sequences").json()["sequences"]
        ids = {s["id"] for s in seqs}
        assert {s.sequence_id for s in ds.sequences} <= ids
        assert "composites" in ids
        frames = client.get("/api/frames", params={"seq": ds.sequences[0].sequence_id}).json()
        assert frames["frames"] == [0, 1, 2, 3]
        assert frames["width"] == 48
        assert client.get("/api/frames", params={"seq": "nope"}).status_code == 404

    def test_image_roundtrip(self, service):
        client, ds, _ = service
        seq = ds.sequences[0]
        r = client.get(f"/api/image/{seq.sequence_id}/0.png")
        assert r.status_code == 200
        img = cv2.imdecode(np.frombuffer(r.content, np.uint8), cv2.IMREAD_COLOR)[:, :, ::-1]
        np.testing.assert_array_equal(img, seq.frames[0].rgb)

    def test_descriptor_matches_library(self, service):
        client, ds, ckpt = service
        model = load_checkpoint(ckpt).model
        seq = ds.sequences[0]
        r = client.post("/api/descriptor", json={
            "model": "vanilla", "seq": seq.sequence_id, "frame": 1, "u": 10, "v": 12})
        assert r.status_code == 200
        got = np.array(r.json()["descriptor"])
        expected = model.describe(seq.frames[1].rgb).values[12, 10]
        np.testing.assert_allclose(got, expected, rtol=1e-6)

    def test_descriptor_errors(self, service):
        client, ds, _ = service
        seq = ds.sequences[0].sequence_id
        assert client.post("/api/descriptor", json={
            "model": "nope", "seq": seq, "frame": 0, "u": 1, "v": 1}).status_code == 404
        assert client.post("/api/descriptor", json={
            "model": "vanilla", "seq": seq, "frame": 0, "u": 99, "v": 1}).status_code == 422
        assert client.post("/api/descriptor", json={
            "model": "vanilla", "seq": "nope", "frame": 0, "u": 1, "v": 1}).status_code == 404

    def test_cache_transparency(self, service):
        client, ds, _ = service
        body = {"model": "vanilla", "seq": ds.sequences[0].sequence_id, "frame": 2, "u": 5, "v": 6}
        r1 = client.post("/api/descriptor", json=body).content
        r2 = client.post("/api/descriptor", json=body).content
        assert r1 == r2

    def test_match_consistent_with_best_match(self, service):
        client, ds, ckpt = service
        model = load_checkpoint(ckpt).model
        seq = ds.sequences[0]
        tgt = ds.sequences[1]
        body = {
            "model": "vanilla",
            "source": {"seq": seq.sequence_id, "frame": 0, "u": 20, "v": 20},
            "target": {"seq": tgt.sequence_id, "frame": 3},
        }
        got = client.post("/api/match", json=body).json()
        q = model.describe(seq.frames[0].rgb).values[20, 20]
        pix, dist = best_match(q, model.describe(tgt.frames[3].rgb))
        assert (got["pixel"]["u"], got["pixel"]["v"]) == (pix.u, pix.v)
        assert got["distance"] == pytest.approx(dist, rel=1e-6)

    def test_match_composite_target(self, service):
        client, ds, _ = service
        body = {
            "model": "vanilla",
            "source": {"seq": ds.sequences[0].sequence_id, "frame": 0, "u": 24, "v": 24},
            "target": {"seq": "composites", "frame": 0},
        }
        r = client.post("/api/match", json=body)
        assert r.status_code == 200

    def test_heatmap_png_darkest_at_match(self, service):
        client, ds, _ = service
        body = {
            "model": "vanilla",
            "source": {"seq": ds.sequences[0].sequence_id, "frame": 0, "u": 18, "v": 22},
            "target": {"seq": ds.sequences[0].sequence_id, "frame": 1},
        }
        got = client.post("/api/match", json=body).json()
        r = client.get(f"/api/heatmap/{got['heatmap_id']}.png")
        assert r.status_code == 200
        img = cv2.imdecode(np.frombuffer(r.content, np.uint8), cv2.IMREAD_UNCHANGED)
        v, u = np.unravel_index(np.argmin(img), img.shape)
        assert img[int(got["pixel"]["v"]), int(got["pixel"]["u"])] == img[v, u]

    def test_heatmap_f32_grid(self, service):
        client, ds, _ = service
        body = {
            "model": "vanilla",
            "source": {"seq": ds.sequences[0].sequence_id, "frame": 0, "u": 18, "v": 22},
            "target": {"seq": ds.sequences[0].sequence_id, "frame": 1},
        }
        got = client.post("/api/match", json=body).json()
        r = client.get(f"/api/heatmap/{got['heatmap_id']}.png", params={"format": "f32"})
        grid = np.load(io.BytesIO(r.content))
        assert grid.dtype == np.float32
        assert float(grid.min()) == pytest.approx(got["distance"], rel=1e-6)
        assert client.get("/api/heatmap/ffffffffffffffff.png").status_code == 404

    def test_graph_endpoint(self, service):
        client, ds, _ = service
        got = client.get("/api/graph").json()
        assert set(got["node_ids"]) == {s.sequence_id for s in ds.sequences}
        assert "w_minus" in got and "confidence" in got
