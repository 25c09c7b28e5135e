"""Hot numeric kernels with numba and pure-numpy implementations.

Every kernel exists in two versions: a numba ``@njit`` one (``*_numba``) and a
vectorized numpy one (``*_numpy``). The module-level names bind to whichever
path is active. Selection happens once at import time:

* ``CADD_NO_NUMBA=1`` in the environment forces the numpy path,
* otherwise numba is used when importable.

``benchmarks/bench_kernels.py`` times both paths side by side. Both versions
of a kernel compute the same quantities; tests assert agreement to float
tolerance.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("CADD_NO_NUMBA", "").strip() in ("1", "true", "yes")

try:
    if _FORCE_NUMPY:
        raise ImportError("numba disabled via CADD_NO_NUMBA")
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on environment
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        # Decorator stub so the *_numba names stay importable.
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


USING_NUMBA = NUMBA_AVAILABLE and not _FORCE_NUMPY


# ---------------------------------------------------------------------------
# Ray / box intersection (renderer inner loop)
# ---------------------------------------------------------------------------


@njit(cache=True)
def raycast_box_numba(origin, dirs, half_extents):
    """Slab-test rays against an origin-centered axis-aligned box.

    origin: (3,) ray origin in object frame.
    dirs: (N, 3) ray directions (not normalized; the returned t is the
        parameter along each dir, so point = origin + t * dir).
    half_extents: (3,) box half sizes.

    Returns (t, face, fa, fb): t < 0 marks a miss; face is 2*axis + (dir>0
    side); (fa, fb) are in-face coordinates in [0, 1].
    """
    n = dirs.shape[0]
    t_out = np.full(n, -1.0)
    face_out = np.full(n, -1, dtype=np.int64)
    fa_out = np.zeros(n)
    fb_out = np.zeros(n)
    eps = 1e-12
    for i in range(n):
        tnear = -1e30
        tfar = 1e30
        axis = -1
        side = 0
        miss = False
        for k in range(3):
            d = dirs[i, k]
            o = origin[k]
            h = half_extents[k]
            if abs(d) < eps:
                if o < -h or o > h:
                    miss = True
                    break
            else:
                t1 = (-h - o) / d
                t2 = (h - o) / d
                s = 0 if d > 0.0 else 1
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tnear:
                    tnear = t1
                    axis = k
                    # entering through the -h plane when moving along +d
                    side = s
                if t2 < tfar:
                    tfar = t2
                if tnear > tfar:
                    miss = True
                    break
        if miss or tfar <= 0.0 or tnear <= 0.0 or axis < 0:
            continue
        t_out[i] = tnear
        face_out[i] = 2 * axis + side
        px = origin[0] + tnear * dirs[i, 0]
        py = origin[1] + tnear * dirs[i, 1]
        pz = origin[2] + tnear * dirs[i, 2]
        if axis == 0:
            fa_out[i] = (py + half_extents[1]) / (2.0 * half_extents[1])
            fb_out[i] = (pz + half_extents[2]) / (2.0 * half_extents[2])
        elif axis == 1:
            fa_out[i] = (px + half_extents[0]) / (2.0 * half_extents[0])
            fb_out[i] = (pz + half_extents[2]) / (2.0 * half_extents[2])
        else:
            fa_out[i] = (px + half_extents[0]) / (2.0 * half_extents[0])
            fb_out[i] = (py + half_extents[1]) / (2.0 * half_extents[1])
    return t_out, face_out, fa_out, fb_out


def raycast_box_numpy(origin, dirs, half_extents):
    """Vectorized twin of :func:`raycast_box_numba`."""
    n = dirs.shape[0]
    o = np.asarray(origin, dtype=np.float64)
    h = np.asarray(half_extents, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-h - o) / d
        t2 = (h - o) / d
    parallel = np.abs(d) < 1e-12
    lo = np.where(parallel, -1e30, np.minimum(t1, t2))
    hi = np.where(parallel, 1e30, np.maximum(t1, t2))
    outside_slab = parallel & ((o < -h) | (o > h))

    axis = np.argmax(lo, axis=1)
    tnear = lo[np.arange(n), axis]
    tfar = np.min(hi, axis=1)
    hit = (~outside_slab.any(axis=1)) & (tnear <= tfar) & (tnear > 0.0) & (tfar > 0.0)

    t = np.where(hit, tnear, -1.0)
    side = (d[np.arange(n), axis] <= 0.0).astype(np.int64)
    face = np.where(hit, 2 * axis + side, -1)

    p = o[None, :] + tnear[:, None] * d
    uv_axes = np.array([[1, 2], [0, 2], [0, 1]])
    ax_a = uv_axes[axis, 0]
    ax_b = uv_axes[axis, 1]
    idx = np.arange(n)
    fa = (p[idx, ax_a] + h[ax_a]) / (2.0 * h[ax_a])
    fb = (p[idx, ax_b] + h[ax_b]) / (2.0 * h[ax_b])
    fa = np.where(hit, fa, 0.0)
    fb = np.where(hit, fb, 0.0)
    return t, face, fa, fb


# ---------------------------------------------------------------------------
# Reprojection + occlusion check (match mining inner loop)
# ---------------------------------------------------------------------------


@njit(cache=True)
def reproject_check_numba(points, rot_cw, t_cw, fx, fy, cx, cy, depth, mask, tol):
    """Project world points into a target view and test depth consistency.

    points: (N, 3) world points. rot_cw/t_cw: camera-from-world rotation and
    translation. depth/mask: target frame rasters (0 depth = invalid).

    Returns (u, v, z, ok): real-valued target pixels, camera depth, and a
    validity flag. ok requires z > 0, bilinear-interpolable in-bounds pixel,
    four valid depth corners, target mask at the rounded pixel, and
    |z - bilinear(depth)| <= tol.
    """
    n = points.shape[0]
    h_img, w_img = depth.shape
    u_out = np.zeros(n)
    v_out = np.zeros(n)
    z_out = np.zeros(n)
    ok = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        px = points[i, 0] - t_cw[0]
        py = points[i, 1] - t_cw[1]
        pz = points[i, 2] - t_cw[2]
        x = rot_cw[0, 0] * px + rot_cw[0, 1] * py + rot_cw[0, 2] * pz
        y = rot_cw[1, 0] * px + rot_cw[1, 1] * py + rot_cw[1, 2] * pz
        z = rot_cw[2, 0] * px + rot_cw[2, 1] * py + rot_cw[2, 2] * pz
        if z <= 0.0:
            continue
        u = fx * x / z + cx
        v = fy * y / z + cy
        u_out[i] = u
        v_out[i] = v
        z_out[i] = z
        if u < 0.0 or u > w_img - 1.0 or v < 0.0 or v > h_img - 1.0:
            continue
        u0 = int(np.floor(u))
        v0 = int(np.floor(v))
        u1 = min(u0 + 1, w_img - 1)
        v1 = min(v0 + 1, h_img - 1)
        d00 = depth[v0, u0]
        d01 = depth[v0, u1]
        d10 = depth[v1, u0]
        d11 = depth[v1, u1]
        if d00 <= 0.0 or d01 <= 0.0 or d10 <= 0.0 or d11 <= 0.0:
            continue
        au = u - u0
        av = v - v0
        dz = (
            d00 * (1 - au) * (1 - av)
            + d01 * au * (1 - av)
            + d10 * (1 - au) * av
            + d11 * au * av
        )
        ur = int(round(u))
        vr = int(round(v))
        if not mask[vr, ur]:
            continue
        if abs(z - dz) <= tol:
            ok[i] = True
    return u_out, v_out, z_out, ok


def reproject_check_numpy(points, rot_cw, t_cw, fx, fy, cx, cy, depth, mask, tol):
    """Vectorized twin of :func:`reproject_check_numba`."""
    h_img, w_img = depth.shape
    cam = (points - t_cw[None, :]) @ rot_cw.T
    z = cam[:, 2]
    front = z > 0.0
    zsafe = np.where(front, z, 1.0)
    u = fx * cam[:, 0] / zsafe + cx
    v = fy * cam[:, 1] / zsafe + cy
    u = np.where(front, u, 0.0)
    v = np.where(front, v, 0.0)
    z = np.where(front, z, 0.0)

    inb = front & (u >= 0.0) & (u <= w_img - 1.0) & (v >= 0.0) & (v <= h_img - 1.0)
    u0 = np.floor(np.where(inb, u, 0.0)).astype(np.int64)
    v0 = np.floor(np.where(inb, v, 0.0)).astype(np.int64)
    u1 = np.minimum(u0 + 1, w_img - 1)
    v1 = np.minimum(v0 + 1, h_img - 1)
    d00 = depth[v0, u0]
    d01 = depth[v0, u1]
    d10 = depth[v1, u0]
    d11 = depth[v1, u1]
    corners_ok = (d00 > 0) & (d01 > 0) & (d10 > 0) & (d11 > 0)
    au = u - u0
    av = v - v0
    dz = d00 * (1 - au) * (1 - av) + d01 * au * (1 - av) + d10 * (1 - au) * av + d11 * au * av
    ur = np.clip(np.round(u).astype(np.int64), 0, w_img - 1)
    vr = np.clip(np.round(v).astype(np.int64), 0, h_img - 1)
    ok = inb & corners_ok & mask[vr, ur] & (np.abs(z - dz) <= tol)
    return u, v, z, ok


# ---------------------------------------------------------------------------
# K-means assignment step
# ---------------------------------------------------------------------------


@njit(cache=True)
def kmeans_assign_numba(x, centroids):
    """Nearest-centroid labels and squared distances for each row of x."""
    n, d = x.shape
    k = centroids.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    dist2 = np.zeros(n)
    for i in range(n):
        best = 1e30
        bj = 0
        for j in range(k):
            s = 0.0
            for m in range(d):
                diff = x[i, m] - centroids[j, m]
                s += diff * diff
                if s >= best:
                    break
            if s < best:
                best = s
                bj = j
        labels[i] = bj
        dist2[i] = best
    return labels, dist2


def kmeans_assign_numpy(x, centroids):
    """Vectorized twin of :func:`kmeans_assign_numba` (chunked)."""
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist2 = np.empty(n, dtype=np.float64)
    # chunk to bound the (chunk, k) temporary
    step = max(1, int(2e7) // max(1, centroids.shape[0] * x.shape[1]))
    c2 = (centroids * centroids).sum(axis=1)
    for s in range(0, n, step):
        xs = x[s : s + step]
        d2 = (xs * xs).sum(axis=1)[:, None] + c2[None, :] - 2.0 * (xs @ centroids.T)
        np.maximum(d2, 0.0, out=d2)
        lab = np.argmin(d2, axis=1)
        labels[s : s + step] = lab
        dist2[s : s + step] = d2[np.arange(xs.shape[0]), lab]
    return labels, dist2


# ---------------------------------------------------------------------------
# Per-pixel descriptor distance field (best-match / heatmap inner loop)
# ---------------------------------------------------------------------------


@njit(cache=True)
def distance_field_numba(values, query):
    """L2 distance from query to every pixel of an (H, W, D) field."""
    h, w, d = values.shape
    out = np.empty((h, w), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            s = 0.0
            for m in range(d):
                diff = float(values[i, j, m]) - float(query[m])
                s += diff * diff
            out[i, j] = np.float32(np.sqrt(s))
    return out


def distance_field_numpy(values, query):
    """Vectorized twin of :func:`distance_field_numba`."""
    diff = values.astype(np.float64) - np.asarray(query, dtype=np.float64)[None, None, :]
    return np.sqrt((diff * diff).sum(axis=2)).astype(np.float32)


# ---------------------------------------------------------------------------
# Scatter-add of per-pixel gradients (training inner loop)
# ---------------------------------------------------------------------------


@njit(cache=True)
def scatter_add_chw_numba(grad, ys, xs, vals):
    """grad[:, ys[i], xs[i]] += vals[i, :] for every sample i (in place)."""
    n = ys.shape[0]
    c = grad.shape[0]
    for i in range(n):
        y = ys[i]
        x = xs[i]
        for m in range(c):
            grad[m, y, x] += vals[i, m]
    return grad


def scatter_add_chw_numpy(grad, ys, xs, vals):
    """np.add.at twin of :func:`scatter_add_chw_numba`."""
    np.add.at(grad, (slice(None), ys, xs), vals.T)
    return grad


# ---------------------------------------------------------------------------
# Path selection
# ---------------------------------------------------------------------------

if USING_NUMBA:
    raycast_box = raycast_box_numba
    reproject_check = reproject_check_numba
    distance_field = distance_field_numba
    scatter_add_chw = scatter_add_chw_numba
else:
    raycast_box = raycast_box_numpy
    reproject_check = reproject_check_numpy
    distance_field = distance_field_numpy
    scatter_add_chw = scatter_add_chw_numpy

# BLAS-backed matmul beats the scalar loop here (see benchmarks); the numba
# version stays available for comparison.
kmeans_assign = kmeans_assign_numpy

KERNEL_PAIRS = {
    "raycast_box": (raycast_box_numba, raycast_box_numpy),
    "reproject_check": (reproject_check_numba, reproject_check_numpy),
    "kmeans_assign": (kmeans_assign_numba, kmeans_assign_numpy),
    "distance_field": (distance_field_numba, distance_field_numpy),
    "scatter_add_chw": (scatter_add_chw_numba, scatter_add_chw_numpy),
}
