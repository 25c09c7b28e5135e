"""Minimal neural-net layers with explicit forward/backward passes.

Convolutions run as im2col + BLAS matmul; bilinear resizing is expressed as
two interpolation matrices so its backward pass is the exact transpose.
Layers are stateless across calls: training forwards return a cache object
that backward consumes, so several images can be in flight (Siamese pairs).
Images are (C, H, W) single samples, dense features are (B, D) batches.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Conv2d:
    """Same-padded k x k convolution with stride."""

    def __init__(self, c_in, c_out, k=3, stride=1, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        std = np.sqrt(2.0 / (c_in * k * k))
        self.w = (rng.standard_normal((c_out, c_in, k, k)) * std).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.k = k
        self.stride = stride

    @property
    def params(self):
        return {"w": self.w, "b": self.b}

    def _cols(self, x):
        k, s = self.k, self.stride
        p = k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        c, ho, wo = win.shape[0], win.shape[1], win.shape[2]
        cols = win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
        return np.ascontiguousarray(cols), ho, wo, xp.shape

    def apply(self, x):
        cols, ho, wo, _ = self._cols(x)
        w_mat = self.w.reshape(self.w.shape[0], -1)
        return (w_mat @ cols + self.b[:, None]).reshape(-1, ho, wo)

    def apply_train(self, x):
        cols, ho, wo, xp_shape = self._cols(x)
        w_mat = self.w.reshape(self.w.shape[0], -1)
        y = (w_mat @ cols + self.b[:, None]).reshape(-1, ho, wo)
        return y, (cols, x.shape, xp_shape, ho, wo)

    def backward(self, cache, dy):
        cols, x_shape, xp_shape, ho, wo = cache
        c_out = self.w.shape[0]
        dy_mat = dy.reshape(c_out, -1)
        dw = (dy_mat @ cols.T).reshape(self.w.shape)
        db = dy_mat.sum(axis=1)
        w_mat = self.w.reshape(c_out, -1)
        dcols = (w_mat.T @ dy_mat).reshape(x_shape[0], self.k, self.k, ho, wo)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        s = self.stride
        for ki in range(self.k):
            for kj in range(self.k):
                dxp[:, ki : ki + s * ho : s, kj : kj + s * wo : s] += dcols[:, ki, kj]
        p = self.k // 2
        dx = dxp[:, p : p + x_shape[1], p : p + x_shape[2]]
        return dx, {"w": dw, "b": db}


class ReLU:
    params: dict = {}

    def apply(self, x):
        return np.maximum(x, 0)

    def apply_train(self, x):
        return np.maximum(x, 0), x > 0

    def backward(self, cache, dy):
        return dy * cache, {}


_INTERP_CACHE: dict[tuple[int, int], np.ndarray] = {}


def interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-interpolation matrix for bilinear resize (half-pixel centers)."""
    key = (n_in, n_out)
    m = _INTERP_CACHE.get(key)
    if m is None:
        m = np.zeros((n_out, n_in))
        scale = n_in / n_out
        for o in range(n_out):
            src = (o + 0.5) * scale - 0.5
            if src <= 0:
                m[o, 0] = 1.0
                continue
            if src >= n_in - 1:
                m[o, n_in - 1] = 1.0
                continue
            i0 = int(np.floor(src))
            frac = src - i0
            m[o, i0] = 1.0 - frac
            m[o, i0 + 1] = frac
        _INTERP_CACHE[key] = m
    return m


class BilinearResize:
    """Resize (C, H, W) by an integer factor; backward is the exact transpose."""

    params: dict = {}

    def __init__(self, factor: int):
        self.factor = factor

    def apply(self, x):
        _, h, w = x.shape
        wr = interp_matrix(h, h * self.factor).astype(x.dtype)
        wc = interp_matrix(w, w * self.factor).astype(x.dtype)
        return np.matmul(np.matmul(wr, x), wc.T)

    def apply_train(self, x):
        return self.apply(x), x.shape[1:]

    def backward(self, cache, dy):
        h, w = cache
        wr = interp_matrix(h, h * self.factor).astype(dy.dtype)
        wc = interp_matrix(w, w * self.factor).astype(dy.dtype)
        return np.matmul(np.matmul(wr.T, dy), wc), {}


class NearestResize:
    """Nearest-neighbor upsample by an integer factor."""

    params: dict = {}

    def __init__(self, factor: int):
        self.factor = factor

    def apply(self, x):
        return x.repeat(self.factor, axis=1).repeat(self.factor, axis=2)

    def apply_train(self, x):
        return self.apply(x), None

    def backward(self, cache, dy):
        f = self.factor
        c, h, w = dy.shape
        return dy.reshape(c, h // f, f, w // f, f).sum(axis=(2, 4)), {}


class Linear:
    """Dense layer over (B, D_in) batches."""

    def __init__(self, d_in, d_out, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng()
        std = np.sqrt(2.0 / d_in)
        self.w = (rng.standard_normal((d_out, d_in)) * std).astype(dtype)
        self.b = np.zeros(d_out, dtype=dtype)

    @property
    def params(self):
        return {"w": self.w, "b": self.b}

    def apply(self, x):
        return x @ self.w.T + self.b

    def apply_train(self, x):
        return self.apply(x), x

    def backward(self, cache, dy):
        return dy @ self.w, {"w": dy.T @ cache, "b": dy.sum(axis=0)}


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def infer(self, x):
        for layer in self.layers:
            x = layer.apply(x)
        return x

    def forward_train(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.apply_train(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, dy):
        """Returns (d input, named parameter gradients)."""
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            dy, layer_grads = self.layers[i].backward(caches[i], dy)
            for name, g in layer_grads.items():
                grads[f"{i}.{name}"] = g
        return dy, grads

    def named_params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                out[f"{i}.{name}"] = arr
        return out

    def state_dict(self):
        return {k: v.copy() for k, v in self.named_params().items()}

    def load_state_dict(self, state: dict):
        for key, arr in self.named_params().items():
            if key not in state:
                raise KeyError(f"missing parameter {key!r} in state dict")
            if state[key].shape != arr.shape:
                raise ValueError(f"shape mismatch for {key!r}")
            arr[...] = state[key]


def add_grads(total: dict | None, grads: dict) -> dict:
    """Accumulate named gradient dicts (None starts a fresh sum)."""
    if total is None:
        return {k: v.copy() for k, v in grads.items()}
    for k, v in grads.items():
        total[k] += v
    return total


class Adam:
    """Adam with a stepped learning-rate decay: lr0 * decay^(updates // interval)."""

    def __init__(self, params: dict, lr0=1e-4, decay=0.9, decay_interval=250,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr0 = lr0
        self.decay = decay
        self.decay_interval = decay_interval
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.updates = 0

    @property
    def current_lr(self) -> float:
        return self.lr0 * self.decay ** (self.updates // self.decay_interval)

    def step(self, grads: dict) -> float:
        """One update; returns the learning rate that was applied."""
        lr = self.current_lr
        self.updates += 1
        t = self.updates
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1**t)
            vhat = self.v[k] / (1 - b2**t)
            p -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)
        return lr
