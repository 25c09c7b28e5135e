import numpy as np
import pytest

from cadd.data import (
    CompositeFrame,
    DataError,
    composite_multi_object,
    default_scene_spec,
    generate_synthetic_dataset,
    load_composites,
    load_dataset,
    make_two_object_composites,
    save_composites,
    save_dataset,
)
from cadd.data.synthetic import build_instance, orbit_pose
from cadd.geometry import project, unproject


class TestGeneration:
    def test_counts_follow_spec(self, desk_dataset):
        assert len(desk_dataset.sequences) == 8
        assert sum(len(s.frames) for s in desk_dataset.sequences) == 240
        cats = {s.true_category for s in desk_dataset.sequences}
        assert len(cats) == 2

    def test_single_view_rejected(self):
        with pytest.raises(DataError):
            default_scene_spec(seed=0, n_views=1)

    def test_deterministic_given_seed(self):
        a = generate_synthetic_dataset(
            default_scene_spec(seed=3, instances_per_category=1, n_views=3)
        )
        b = generate_synthetic_dataset(
            default_scene_spec(seed=3, instances_per_category=1, n_views=3)
        )
        for sa, sb in zip(a.sequences, b.sequences):
            for fa, fb in zip(sa.frames, sb.frames):
                np.testing.assert_array_equal(fa.rgb, fb.rgb)
                np.testing.assert_array_equal(fa.depth, fb.depth)
                np.testing.assert_array_equal(fa.mask, fb.mask)

    def test_mask_centroid_reprojects_onto_mask(self, desk_dataset):
        seq = desk_dataset.sequences[0]
        fa, fb = seq.frames[0], seq.frames[1]
        vs, us = np.nonzero(fa.mask)
        cu, cv = int(us.mean()), int(vs.mean())
        if not fa.mask[cv, cu]:  # centroid of a non-convex mask can fall off it
            k = np.argmin((us - cu) ** 2 + (vs - cv) ** 2)
            cu, cv = int(us[k]), int(vs[k])
        w = unproject((cu, cv), fa.depth[cv, cu], fa.intrinsics, fa.pose)
        pix, _ = project(w, fb.intrinsics, fb.pose)
        u, v = int(round(pix[0])), int(round(pix[1]))
        assert fb.mask[v, u]

    def test_masked_pixels_on_known_surface(self, desk_dataset):
        # every masked pixel unprojects onto the instance's box surface (<= 1 mm)
        spec = default_scene_spec(seed=11)
        inst = build_instance(spec, 0, 0)
        frame = desk_dataset.sequences[0].frames[4]
        vs, us = np.nonzero(frame.mask)
        z = frame.depth[vs, us]
        world = unproject(np.stack([us, vs], 1), z, frame.intrinsics, frame.pose)
        obj = world @ inst.rotation  # world -> object frame (box axis-aligned)
        h = inst.half_extents
        # distance to the box surface: max over axes of |coord| - h must be ~0
        overshoot = np.abs(obj) - h[None, :]
        dist = np.abs(overshoot.max(axis=1))
        assert dist.max() <= 1e-3

    def test_poses_orthonormal(self, desk_dataset):
        for seq in desk_dataset.sequences:
            for f in seq.frames[:3]:
                r = f.pose.rotation
                np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)
                assert np.linalg.det(r) > 0.999

    def test_orbit_views_distinct(self):
        spec = default_scene_spec(seed=0, n_views=4)
        poses = [orbit_pose(spec, k).world_from_camera for k in range(4)]
        assert not np.allclose(poses[0], poses[1])

    def test_keypoints_cover_dataset(self, desk_dataset):
        for seq in desk_dataset.sequences:
            marks = desk_dataset.keypoints[seq.sequence_id]
            assert len(marks) == len(seq.frames)
            visible = sum(len(m) for m in marks.values())
            assert visible > len(seq.frames)  # at least ~1 landmark per frame


class TestRoundTrip:
    def test_save_load_roundtrip(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        loaded = load_dataset(tmp_path)
        assert [s.sequence_id for s in loaded.sequences] == [
            s.sequence_id for s in tiny_dataset.sequences
        ]
        for sa, sb in zip(tiny_dataset.sequences, loaded.sequences):
            assert sb.true_category == sa.true_category
            for fa, fb in zip(sa.frames, sb.frames):
                np.testing.assert_array_equal(fa.rgb, fb.rgb)
                np.testing.assert_array_equal(fa.depth, fb.depth)  # mm-exact
                np.testing.assert_array_equal(fa.mask, fb.mask)
                assert np.abs(fa.pose.world_from_camera - fb.pose.world_from_camera).max() < 1e-9
        assert loaded.keypoints == tiny_dataset.keypoints

    def test_load_empty_directory_fails(self, tmp_path):
        with pytest.raises(DataError, match="dataset index"):
            load_dataset(tmp_path / "nothing")

    def test_corrupt_frame_named_in_error(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        victim = next((tmp_path / "sequences").glob("*/frames/2_depth.png"))
        victim.unlink()
        with pytest.raises(DataError, match="frame 2"):
            load_dataset(tmp_path)

    def test_depth_mm_quantization_identity(self):
        # 1.234 m -> 1234 mm -> 1.234 m
        depth = np.array([[1.234]])
        mm = np.round(depth * 1000.0).astype(np.uint16)
        assert mm[0, 0] == 1234
        assert mm.astype(np.float64)[0, 0] / 1000.0 == 1.234


class TestComposites:
    def test_two_frames_side_by_side(self, tiny_dataset):
        fa = tiny_dataset.sequences[0].frames[0]
        fb = tiny_dataset.sequences[1].frames[0]
        bg = np.zeros((64, 128, 3), dtype=np.uint8)
        comp = composite_multi_object([fa, fb], [(2, 4), (64, 4)], bg, ["a", "b"])
        assert set(np.unique(comp.provenance)) == {-1, 0, 1}
        assert comp.region("a").sum() == fa.mask.sum()
        assert comp.region("b").sum() == fb.mask.sum()

    def test_identity_single_paste(self, tiny_dataset):
        f = tiny_dataset.sequences[0].frames[0]
        bg = np.zeros((48, 48, 3), dtype=np.uint8)
        comp = composite_multi_object([f], [(0, 0)], bg)
        np.testing.assert_array_equal(comp.mask, f.mask)
        np.testing.assert_array_equal(comp.rgb[f.mask], f.rgb[f.mask])

    def test_paste_order_wins(self, tiny_dataset):
        f = tiny_dataset.sequences[0].frames[0]
        g = tiny_dataset.sequences[1].frames[0]
        bg = np.zeros((64, 96, 3), dtype=np.uint8)
        # overlapping placements: the later paste owns the overlap
        comp = composite_multi_object([f, g], [(10, 8), (14, 10)], bg, ["first", "second"])
        overlap_expected = 0
        vs, us = np.nonzero(f.mask)
        first = set(zip((us + 10).tolist(), (vs + 8).tolist()))
        vs, us = np.nonzero(g.mask)
        second = set(zip((us + 14).tolist(), (vs + 10).tolist()))
        overlap_expected = len(first & second)
        assert overlap_expected > 0
        assert comp.region("second").sum() == g.mask.sum()
        assert comp.region("first").sum() == f.mask.sum() - overlap_expected

    def test_fully_overlapping_rejected(self, tiny_dataset):
        f = tiny_dataset.sequences[0].frames[0]
        bg = np.zeros((64, 96, 3), dtype=np.uint8)
        with pytest.raises(DataError, match="overlap"):
            composite_multi_object([f, f], [(5, 5), (5, 5)], bg)

    def test_out_of_canvas_rejected(self, tiny_dataset):
        f = tiny_dataset.sequences[0].frames[0]
        bg = np.zeros((40, 40, 3), dtype=np.uint8)
        with pytest.raises(DataError, match="outside"):
            composite_multi_object([f], [(30, 30)], bg)

    def test_provenance_partitions_mask(self, desk_dataset):
        comps = make_two_object_composites(desk_dataset, 5, np.random.default_rng(0))
        for comp in comps:
            assert ((comp.provenance >= 0) == comp.mask).all()
            assert len(comp.sources) == 2

    def test_composite_persistence(self, desk_dataset, tmp_path):
        comps = make_two_object_composites(desk_dataset, 3, np.random.default_rng(1))
        save_composites(comps, tmp_path)
        loaded = load_composites(tmp_path)
        assert len(loaded) == 3
        for a, b in zip(comps, loaded):
            np.testing.assert_array_equal(a.rgb, b.rgb)
            np.testing.assert_array_equal(a.provenance, b.provenance)
            assert a.sources == b.sources
