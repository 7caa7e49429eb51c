"""Minimal deterministic neural-net kernels on numpy.

Everything here is plain forward/backward arithmetic: stride-2 3x3
convolution via im2col, dense layers, and an Adam optimizer.  Parameters are
bare ndarrays; dtype of the parameters decides the compute dtype (float32 in
training, float64 in gradient-check tests).  Single-threaded numpy keeps
results bit-reproducible for a fixed seed.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def init_linear(rng: np.random.Generator, n_in: int, n_out: int, dtype=np.float32):
    """Uniform(-1/sqrt(n_in), 1/sqrt(n_in)) weights; zero biases.

    Zero biases matter for the encoder: a nonzero bias paints every
    background pixel with the same activation, which swamps cosine
    similarities with a shared direction before training even starts.
    """
    lim = 1.0 / np.sqrt(n_in)
    w = rng.uniform(-lim, lim, size=(n_in, n_out)).astype(dtype)
    b = np.zeros(n_out, dtype=dtype)
    return w, b


def init_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int = 3, dtype=np.float32):
    """Kernel of shape (k, k, c_in, c_out), fan-in scaled; zero biases."""
    fan_in = k * k * c_in
    lim = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-lim, lim, size=(k, k, c_in, c_out)).astype(dtype)
    b = np.zeros(c_out, dtype=dtype)
    return w, b


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """3x3 stride-2 convolution with zero padding 1.

    x: (N, H, W, C_in), w: (3, 3, C_in, C_out).  Returns (y, cache) where
    y has shape (N, H//2, W//2, C_out) for even H, W.
    """
    n, h, wd, c_in = x.shape
    c_out = w.shape[3]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    # windows: (N, H, W, C, 3, 3) -> stride-2 subsample -> patch-major layout
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::2, ::2]
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, 9 * c_in)
    y = cols @ w.reshape(9 * c_in, c_out) + b
    cache = (cols, x.shape, w)
    return y.reshape(n, ho, wo, c_out), cache


def conv2d_backward(grad_y: np.ndarray, cache):
    """Gradients for conv2d_forward.  Returns (grad_x, grad_w, grad_b)."""
    cols, x_shape, w = cache
    n, h, wd, c_in = x_shape
    c_out = w.shape[3]
    ho, wo = grad_y.shape[1], grad_y.shape[2]
    g = grad_y.reshape(n * ho * wo, c_out)
    grad_w = (cols.T @ g).reshape(w.shape)
    grad_b = g.sum(axis=0)
    gcols = (g @ w.reshape(9 * c_in, c_out).T).reshape(n, ho, wo, 3, 3, c_in)
    gxp = np.zeros((n, h + 2, wd + 2, c_in), dtype=grad_y.dtype)
    for ky in range(3):
        for kx in range(3):
            gxp[:, ky:ky + 2 * ho:2, kx:kx + 2 * wo:2] += gcols[:, :, :, ky, kx]
    return gxp[:, 1:h + 1, 1:wd + 1], grad_w, grad_b


def mlp_forward(x: np.ndarray, layers, tanh_out: bool = False):
    """Forward through [(w, b), ...] with relu between layers.

    The last layer is linear, or tanh when tanh_out.  Returns (out, caches).
    """
    caches = []
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < last:
            a = np.maximum(z, 0.0)
        elif tanh_out:
            a = np.tanh(z)
        else:
            a = z
        caches.append((h, z, a))
        h = a
    return h, caches


def mlp_backward(grad_out: np.ndarray, layers, caches, tanh_out: bool = False):
    """Gradients for mlp_forward.  Returns ([(gw, gb), ...], grad_x)."""
    grads = [None] * len(layers)
    g = grad_out
    last = len(layers) - 1
    for i in range(last, -1, -1):
        h, z, a = caches[i]
        if i < last:
            g = g * (z > 0)
        elif tanh_out:
            g = g * (1.0 - a * a)
        grads[i] = (h.T @ g, g.sum(axis=0))
        g = g @ layers[i][0].T
    return grads, g


class Adam:
    """Adam over a flat list of tensors, updated in place."""

    def __init__(self, tensors, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in tensors]
        self.v = [np.zeros_like(p) for p in tensors]

    def step(self, tensors, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(tensors, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state_tensors(self):
        """Moment tensors in a fixed order, for checkpointing."""
        return list(self.m) + list(self.v)
