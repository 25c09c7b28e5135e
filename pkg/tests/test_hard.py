import numpy as np
import pytest

from cadd.graph import GraphError, SimilarityGraph, build_graph, GraphConfig, dataset_features
from cadd.hard import (
    ClassModel,
    ProjectionNetwork,
    assign_class,
    fit_classes,
    hard_triplet_loss,
    hard_triplet_loss_grad,
    project,
    train_projection,
)


class TestProject:
    def test_zero_weights_zero_output(self):
        net = ProjectionNetwork(4, 8, 3, rng=np.random.default_rng(0))
        for arr in net.named_params().values():
            arr[...] = 0
        out = project(net, np.ones(4, dtype=np.float32))
        np.testing.assert_array_equal(out, np.zeros(3, dtype=np.float32))

    def test_identity_like_weights(self):
        net = ProjectionNetwork(3, 3, 3, rng=np.random.default_rng(0))
        params = net.named_params()
        params["0.w"][...] = np.eye(3, dtype=np.float32)
        params["0.b"][...] = 0
        params["2.w"][...] = np.eye(3, dtype=np.float32)
        params["2.b"][...] = 0
        x = np.array([0.5, 1.0, 2.0], dtype=np.float32)  # non-negative passes ReLU
        np.testing.assert_allclose(project(net, x), x, atol=1e-6)

    def test_hand_computed_two_layer(self):
        net = ProjectionNetwork(3, 2, 2, rng=np.random.default_rng(0))
        params = net.named_params()
        w1 = np.array([[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]], dtype=np.float32)
        b1 = np.array([0.1, -0.2], dtype=np.float32)
        w2 = np.array([[2.0, 1.0], [0.0, -1.0]], dtype=np.float32)
        b2 = np.array([0.0, 0.3], dtype=np.float32)
        params["0.w"][...] = w1
        params["0.b"][...] = b1
        params["2.w"][...] = w2
        params["2.b"][...] = b2
        x = np.array([1.0, 2.0, 0.5], dtype=np.float32)
        h = np.maximum(w1 @ x + b1, 0)
        expected = w2 @ h + b2
        np.testing.assert_allclose(project(net, x), expected, atol=1e-6)

    def test_dim_mismatch(self):
        net = ProjectionNetwork(4, 8, 3, rng=np.random.default_rng(0))
        with pytest.raises(GraphError):
            project(net, np.ones(5, dtype=np.float32))


class TestHardTripletLoss:
    def test_anchor_equals_positive(self):
        a = np.zeros(3)
        n = np.array([1.0, 0.0, 0.0])
        assert hard_triplet_loss(a, a, n, 1.0, 0.5) == 0.0

    def test_forced_arithmetic(self):
        a = np.zeros(3)
        p = np.array([1.0, 0.0, 0.0])
        n = np.array([0.2, 0.0, 0.0])
        assert hard_triplet_loss(a, p, n, 1.0, 0.5) == pytest.approx(1.3, abs=1e-12)

    def test_zero_confidence_zero_margin_hinge(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, p, n = rng.standard_normal((3, 4))
            dp = np.linalg.norm(a - p)
            dn = np.linalg.norm(a - n)
            assert hard_triplet_loss(a, p, n, 0.0, 0.5) == pytest.approx(max(0.0, dp - dn))

    def test_nonnegative_and_inactive_region(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, p, n = rng.standard_normal((3, 5))
            c = rng.uniform(0, 1)
            loss = hard_triplet_loss(a, p, n, c, 0.5)
            assert loss >= 0
            if np.linalg.norm(a - n) >= np.linalg.norm(a - p) + c * 0.5:
                assert loss == 0.0

    def test_grad_vs_finite_differences(self):
        rng = np.random.default_rng(2)
        eps = 1e-6
        checked = 0
        while checked < 30:
            a, p, n = rng.standard_normal((3, 4))
            c = rng.uniform(0.1, 1.0)
            loss = np.linalg.norm(a - p) - np.linalg.norm(a - n) + c * 0.5
            if abs(loss) < 1e-2:  # stay away from the hinge kink
                continue
            _, da, dp, dn = hard_triplet_loss_grad(a, p, n, c, 0.5)
            for arr, g in ((a, da), (p, dp), (n, dn)):
                num = np.zeros_like(arr)
                for i in range(arr.size):
                    old = arr[i]
                    arr[i] = old + eps
                    fp = hard_triplet_loss(a, p, n, c, 0.5)
                    arr[i] = old - eps
                    fm = hard_triplet_loss(a, p, n, c, 0.5)
                    arr[i] = old
                    num[i] = (fp - fm) / (2 * eps)
                np.testing.assert_allclose(g, num, rtol=1e-4, atol=1e-8)
            checked += 1

    def test_invalid_confidence(self):
        with pytest.raises(GraphError):
            hard_triplet_loss(np.zeros(2), np.zeros(2), np.zeros(2), 1.5, 0.5)


@pytest.fixture(scope="module")
def desk_graph_and_features(desk_dataset):
    cfg = GraphConfig(n_global=10, target_size=8, seed=0)
    g = build_graph(desk_dataset, cfg)
    feats = dataset_features(desk_dataset, cfg)
    return g, feats


class TestTrainProjection:
    def test_zero_steps_leaves_network_at_init(self, desk_graph_and_features):
        g, feats = desk_graph_and_features
        net1 = train_projection(g, feats, steps=0, rng=np.random.default_rng(3))
        net2 = ProjectionNetwork(next(iter(feats.values())).shape[1], rng=np.random.default_rng(3))
        for k, v in net1.named_params().items():
            np.testing.assert_array_equal(v, net2.named_params()[k])

    def test_category_separation_after_training(self, desk_dataset, desk_graph_and_features):
        g, feats = desk_graph_and_features
        net = train_projection(g, feats, steps=500, lr=1e-4, rng=np.random.default_rng(0))
        cats = {s.sequence_id: s.true_category for s in desk_dataset.sequences}
        emb = {sid: project(net, f).mean(axis=0) for sid, f in feats.items()}
        ids = list(emb)
        within, cross = [], []
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                d = np.linalg.norm(emb[ids[i]] - emb[ids[j]])
                (within if cats[ids[i]] == cats[ids[j]] else cross).append(d)
        assert np.mean(within) < np.mean(cross)

    def test_missing_features_rejected(self, desk_graph_and_features):
        g, feats = desk_graph_and_features
        partial = dict(list(feats.items())[:3])
        with pytest.raises(GraphError):
            train_projection(g, partial, steps=1)


class TestFitAssign:
    def test_k2_aligns_with_categories(self, desk_dataset, desk_graph_and_features):
        from cadd.evaluate import clustering_accuracy

        g, feats = desk_graph_and_features
        net = train_projection(g, feats, steps=500, lr=1e-4, rng=np.random.default_rng(0))
        x = np.concatenate([feats[s.sequence_id] for s in desk_dataset.sequences])
        truth = sum(
            [[s.true_category] * len(s.frames) for s in desk_dataset.sequences], []
        )
        cm = fit_classes(net, x, 2, seed=3)
        pred = assign_class(net, cm, x)
        assert clustering_accuracy(pred, truth) >= 0.9

    def test_k1_rejected(self):
        net = ProjectionNetwork(4, 8, 3, rng=np.random.default_rng(0))
        with pytest.raises(GraphError):
            fit_classes(net, np.zeros((10, 4)), 1)

    def test_k_exceeding_samples_rejected(self):
        net = ProjectionNetwork(4, 8, 3, rng=np.random.default_rng(0))
        with pytest.raises(GraphError):
            fit_classes(net, np.zeros((3, 4)), 5)

    def test_assign_matches_bruteforce_scan(self):
        rng = np.random.default_rng(4)
        net = ProjectionNetwork(6, 16, 4, rng=rng)
        cm = ClassModel(centroids=rng.standard_normal((5, 4)))
        feats = rng.standard_normal((40, 6)).astype(np.float32)
        got = assign_class(net, cm, feats)
        emb = project(net, feats)
        expected = np.argmin(
            np.linalg.norm(emb[:, None, :] - cm.centroids[None], axis=2), axis=1
        )
        np.testing.assert_array_equal(got, expected)

    def test_tie_breaks_to_lowest_index(self):
        net = ProjectionNetwork(2, 2, 2, rng=np.random.default_rng(0))
        params = net.named_params()
        params["0.w"][...] = np.eye(2, dtype=np.float32)
        params["0.b"][...] = 0
        params["2.w"][...] = np.eye(2, dtype=np.float32)
        params["2.b"][...] = 0
        cm = ClassModel(centroids=np.array([[1.0, 0.0], [-1.0, 0.0]]))
        # embedding (0, 0) is equidistant from both centroids
        assert assign_class(net, cm, np.zeros(2, dtype=np.float32)) == 0

    def test_duplicate_centroids_rejected(self):
        with pytest.raises(GraphError):
            ClassModel(centroids=np.zeros((2, 3)))
