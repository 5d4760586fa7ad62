"""Layer primitives on NHWC tensors: valid convolution, 2x2 max pooling,
fully connected, ReLU and softmax cross-entropy. Each forward returns the
output plus a cache consumed by the matching backward."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k):
    """(N, H, W, C) -> (N * Ho * Wo, k * k * C), patch order (ki, kj, c)."""
    n, h, w, c = x.shape
    win = sliding_window_view(x, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    return win.reshape(n * (h - k + 1) * (w - k + 1), k * k * c)


def conv_forward(x, weight, bias):
    """Valid, stride-1 convolution. ``weight`` is (F, k, k, C)."""
    f, k, _, c = weight.shape
    n, h, w, _ = x.shape
    ho, wo = h - k + 1, w - k + 1
    cols = im2col(x, k)
    out = cols @ weight.reshape(f, -1).T
    out += bias
    return out.reshape(n, ho, wo, f), (x, cols)


def conv_backward(dout, cache, weight, need_dx=True):
    x, cols = cache
    f, k, _, c = weight.shape
    n, ho, wo, _ = dout.shape
    d2 = dout.reshape(-1, f)
    dw = (d2.T @ cols).reshape(weight.shape)
    db = d2.sum(axis=0, dtype=np.float64).astype(dout.dtype)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ weight.reshape(f, -1)).reshape(n, ho, wo, k, k, c)
    dx = np.zeros_like(x)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
    return dx, dw, db


def pool_forward(x):
    """2x2 max pooling, stride 2. Ties route to the first cell in row-major order."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"pooling needs even spatial size, got {h}x{w}")
    blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, h // 2, w // 2, c, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg)


def pool_backward(dout, cache):
    shape, arg = cache
    n, h, w, c = shape
    blocks = np.zeros(dout.shape + (4,), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return blocks.reshape(shape)


def fc_forward(x, weight, bias):
    """``weight`` is (out, in); ``x`` is flattened to (N, in)."""
    x2 = x.reshape(x.shape[0], -1)
    return x2 @ weight.T + bias, (x.shape, x2)


def fc_backward(dout, cache, weight):
    shape, x2 = cache
    dw = dout.T @ x2
    db = dout.sum(axis=0, dtype=np.float64).astype(dout.dtype)
    dx = (dout @ weight).reshape(shape)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def softmax(logits):
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient (p - onehot) / N w.r.t. the logits."""
    p = softmax(logits)
    n = len(labels)
    idx = np.arange(n)
    loss = -np.log(np.maximum(p[idx, labels], 1e-300)).sum() / n
    grad = p.copy()
    grad[idx, labels] -= 1.0
    grad /= n
    return float(loss), grad.astype(logits.dtype)
