"""Hand-written neural-network primitives on numpy arrays.

Every op is a pair of pure functions: forward(...) -> (out, cache) and
backward(d_out, cache) -> input/parameter gradients. Convolutions are
expressed as one matrix product over patch columns so the heavy lifting
stays inside BLAS; the column tensor is kept in the cache for the weight
gradient.
"""

from __future__ import annotations

import numpy as np


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1):
    """2D convolution, kernel 1x1 or 3x3, 'same'-style padding of (k-1)//2.

    x: (B, C, H, W); w: (O, C, k, k); b: (O,). With stride 2, H and W must be
    even and the output is (H/2, W/2).
    """
    bsz, cin, h, wd = x.shape
    out_c, _, k, _ = w.shape
    p = (k - 1) // 2
    ho, wo = (h + 2 * p - k) // stride + 1, (wd + 2 * p - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    cols = np.empty((bsz, cin, k, k, ho, wo), dtype=x.dtype)
    for dy in range(k):
        for dx in range(k):
            cols[:, :, dy, dx] = xp[
                :, :, dy : dy + stride * (ho - 1) + 1 : stride, dx : dx + stride * (wo - 1) + 1 : stride
            ]
    cols2 = cols.reshape(bsz, cin * k * k, ho * wo)
    w2 = w.reshape(out_c, cin * k * k)
    out = np.tensordot(w2, cols2, axes=([1], [1]))  # (O, B, P)
    out = out.transpose(1, 0, 2).reshape(bsz, out_c, ho, wo) + b[None, :, None, None]
    cache = (x.shape, cols2, w, stride)
    return out, cache


def conv2d_backward(d_out: np.ndarray, cache):
    (bsz, cin, h, wd), cols2, w, stride = cache
    out_c, _, k, _ = w.shape
    p = (k - 1) // 2
    ho, wo = d_out.shape[2], d_out.shape[3]
    d2 = d_out.reshape(bsz, out_c, ho * wo)
    dw = np.tensordot(d2, cols2, axes=([0, 2], [0, 2])).reshape(w.shape)
    db = d_out.sum(axis=(0, 2, 3))
    w2 = w.reshape(out_c, cin * k * k)
    dcols = np.tensordot(w2.T, d2, axes=([1], [1]))  # (CKK, B, P)
    dcols = dcols.transpose(1, 0, 2).reshape(bsz, cin, k, k, ho, wo)
    dxp = np.zeros((bsz, cin, h + 2 * p, wd + 2 * p), dtype=d_out.dtype)
    for dy in range(k):
        for dx in range(k):
            dxp[
                :, :, dy : dy + stride * (ho - 1) + 1 : stride, dx : dx + stride * (wo - 1) + 1 : stride
            ] += dcols[:, :, dy, dx]
    dx = dxp[:, :, p : p + h, p : p + wd] if p else dxp
    return dx, dw, db


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0.0)
    return out, x > 0


def relu_backward(d_out: np.ndarray, mask) -> np.ndarray:
    return d_out * mask


def sigmoid_forward(x: np.ndarray):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, out


def sigmoid_backward(d_out: np.ndarray, out: np.ndarray) -> np.ndarray:
    return d_out * out * (1.0 - out)


def upsample2_forward(x: np.ndarray):
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3), x.shape


def upsample2_backward(d_out: np.ndarray, in_shape) -> np.ndarray:
    b, c, h, w = in_shape
    return d_out.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5))


def concat_forward(a: np.ndarray, b: np.ndarray):
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_backward(d_out: np.ndarray, split: int):
    return d_out[:, :split], d_out[:, split:]


def global_avg_pool_forward(x: np.ndarray):
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(d_out: np.ndarray, in_shape) -> np.ndarray:
    b, c, h, w = in_shape
    return np.broadcast_to(d_out[:, :, None, None] / (h * w), in_shape).astype(d_out.dtype).copy()


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: (B, D_in), w: (D_in, D_out), b: (D_out,)."""
    return x @ w + b, (x, w)


def dense_backward(d_out: np.ndarray, cache):
    x, w = cache
    return d_out @ w.T, x.T @ d_out, d_out.sum(axis=0)


def init_conv(rng: np.random.Generator, out_c: int, in_c: int, k: int, dtype) -> np.ndarray:
    limit = 1.0 / np.sqrt(in_c * k * k)
    return rng.uniform(-limit, limit, size=(out_c, in_c, k, k)).astype(dtype)


def init_dense(rng: np.random.Generator, d_in: int, d_out: int, dtype) -> np.ndarray:
    limit = 1.0 / np.sqrt(d_in)
    return rng.uniform(-limit, limit, size=(d_in, d_out)).astype(dtype)
