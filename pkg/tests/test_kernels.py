"""Numba and numpy kernel paths must agree to float tolerance."""

import numpy as np

from cadd import kernels


def test_raycast_paths_agree():
    rng = np.random.default_rng(0)
    origin = np.array([0.5, -1.2, 0.8])
    dirs = rng.standard_normal((500, 3))
    half = np.array([0.2, 0.15, 0.1])
    t_a, f_a, a_a, b_a = kernels.raycast_box_numba(origin, dirs, half)
    t_b, f_b, a_b, b_b = kernels.raycast_box_numpy(origin, dirs, half)
    np.testing.assert_allclose(t_a, t_b, atol=1e-12)
    np.testing.assert_array_equal(f_a, f_b)
    np.testing.assert_allclose(a_a, a_b, atol=1e-12)
    np.testing.assert_allclose(b_a, b_b, atol=1e-12)


def test_raycast_hits_unit_box_on_axis():
    origin = np.array([0.0, 0.0, -2.0])
    dirs = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    t, face, fa, fb = kernels.raycast_box_numpy(origin, dirs, np.array([0.5, 0.5, 0.5]))
    assert t[0] == 1.5  # enters the -z face at z=-0.5
    assert face[0] == 4
    assert fa[0] == 0.5 and fb[0] == 0.5
    assert t[1] < 0  # pointing away


def test_reproject_check_paths_agree():
    rng = np.random.default_rng(1)
    points = rng.uniform(-0.3, 0.3, size=(400, 3))
    rot = np.eye(3)
    t = np.array([0.0, 0.0, -1.0])
    depth = np.abs(rng.normal(1.0, 0.05, size=(24, 24)))
    depth[rng.random((24, 24)) < 0.1] = 0.0
    mask = rng.random((24, 24)) < 0.8
    args = (points, rot, t, 30.0, 30.0, 11.5, 11.5, depth, mask, 0.1)
    u1, v1, z1, ok1 = kernels.reproject_check_numba(*args)
    u2, v2, z2, ok2 = kernels.reproject_check_numpy(*args)
    np.testing.assert_allclose(u1, u2, atol=1e-10)
    np.testing.assert_allclose(v1, v2, atol=1e-10)
    np.testing.assert_allclose(z1, z2, atol=1e-10)
    np.testing.assert_array_equal(ok1, ok2)


def test_kmeans_assign_paths_agree():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((300, 12))
    c = rng.standard_normal((7, 12))
    l1, d1 = kernels.kmeans_assign_numba(x, c)
    l2, d2 = kernels.kmeans_assign_numpy(x, c)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_allclose(d1, d2, rtol=1e-9, atol=1e-9)


def test_distance_field_paths_agree():
    rng = np.random.default_rng(3)
    values = rng.standard_normal((20, 30, 5)).astype(np.float32)
    q = rng.standard_normal(5).astype(np.float32)
    d1 = kernels.distance_field_numba(values, q)
    d2 = kernels.distance_field_numpy(values, q)
    np.testing.assert_allclose(d1, d2, rtol=1e-5, atol=1e-6)


def test_scatter_add_paths_agree():
    rng = np.random.default_rng(4)
    ys = rng.integers(0, 16, size=200)
    xs = rng.integers(0, 16, size=200)
    vals = rng.standard_normal((200, 3)).astype(np.float32)
    g1 = np.zeros((3, 16, 16), dtype=np.float32)
    g2 = np.zeros((3, 16, 16), dtype=np.float32)
    kernels.scatter_add_chw_numba(g1, ys, xs, vals)
    kernels.scatter_add_chw_numpy(g2, ys, xs, vals)
    np.testing.assert_allclose(g1, g2, rtol=1e-5, atol=1e-6)
