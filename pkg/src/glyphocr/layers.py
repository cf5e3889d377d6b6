"""Network layer primitives: forward and hand-derived backward passes.

All functions are batched over a leading axis (3D activation tensors are
promoted to a batch of one). Convolution is the zero-padded, same-size
cross-correlation: out[z,x,y] = b[z] + sum_m sum_ij W[z,m,i,j] A[m,x+i,y+j]
with out-of-range A treated as zero. 64-bit floats throughout.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "leaky_relu",
    "activation",
    "activation_grad",
    "conv_forward",
    "conv_backward",
    "maxpool_forward",
    "maxpool_backward",
    "fc_forward",
    "fc_backward",
    "softmax",
    "nll_loss",
    "nll_grad_logits",
]

NLL_CLAMP = 1e-30


def leaky_relu(x, alpha):
    """x for x >= 0, alpha * x below: the positive part minus alpha times the negative part."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, alpha * x)


def activation(x, alpha, kind="leaky"):
    if kind in ("leaky", "relu"):
        return leaky_relu(x, alpha if kind == "leaky" else 0.0)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def activation_grad(pre, alpha, kind="leaky"):
    """Derivative w.r.t. the pre-activation; subgradient 1 at exactly 0."""
    pre = np.asarray(pre, dtype=np.float64)
    if kind in ("leaky", "relu"):
        a = alpha if kind == "leaky" else 0.0
        return np.where(pre >= 0, 1.0, a)
    if kind == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    raise ValueError(f"unknown activation kind {kind!r}")


def _promote(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3:
        return a[None], True
    if a.ndim == 4:
        return a, False
    raise ValueError(f"expected 3D or 4D activation tensor, got shape {a.shape}")


def _im2col(a, k):
    """(B, d, s, s) zero-padded to columns (B, d*k*k, s*s)."""
    b, d, h, w = a.shape
    l = (k - 1) // 2
    padded = np.zeros((b, d, h + 2 * l, w + 2 * l), dtype=np.float64)
    padded[:, :, l:l + h, l:l + w] = a
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
    # (B, d, h, w, k, k) -> (B, d, k, k, h*w)
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, d * k * k, h * w)
    return cols


def conv_forward(a, w, bias):
    """Same-size zero-padded convolution, pre-activation only."""
    a, single = _promote(a)
    dout, din, k, k2 = w.shape
    if k != k2 or k % 2 == 0:
        raise ValueError("convolution kernel must be square with odd side")
    if a.shape[1] != din:
        raise ValueError(f"input has {a.shape[1]} maps, kernel expects {din}")
    b, _, h, wid = a.shape
    cols = _im2col(a, k)
    out = np.einsum("zc,bcp->bzp", w.reshape(dout, din * k * k), cols, optimize=True)
    out = out.reshape(b, dout, h, wid) + bias[None, :, None, None]
    return out[0] if single else out


def conv_backward(dout, a, w):
    """Gradients (da, dw, db) of a scalar loss through conv_forward."""
    a, single_a = _promote(a)
    dout, single_o = _promote(dout)
    z, din, k, _ = w.shape
    b, _, h, wid = a.shape
    l = (k - 1) // 2
    cols = _im2col(a, k)
    dflat = dout.reshape(b, z, h * wid)
    dw = np.einsum("bzp,bcp->zc", dflat, cols, optimize=True).reshape(w.shape)
    db = dflat.sum(axis=(0, 2))
    # scatter W^T * dout back through the column mapping
    dcols = np.einsum("zc,bzp->bcp", w.reshape(z, din * k * k), dflat, optimize=True)
    dcols = dcols.reshape(b, din, k, k, h, wid)
    dpad = np.zeros((b, din, h + 2 * l, wid + 2 * l), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            dpad[:, :, i:i + h, j:j + wid] += dcols[:, :, i, j]
    da = dpad[:, :, l:l + h, l:l + wid]
    return (da[0] if single_a else da), dw, db


def maxpool_forward(a):
    """2x2 max pooling; returns (pooled, route) where route holds, per output
    cell, the row-major index 0..3 of the first maximal element of its block."""
    a, single = _promote(a)
    b, d, h, w = a.shape
    if h % 2 or w % 2:
        raise ValueError(f"max pooling needs even spatial dims, got {h}x{w}")
    blocks = a.reshape(b, d, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, d, h // 2, w // 2, 4)
    route = blocks.argmax(axis=4)
    out = np.take_along_axis(blocks, route[..., None], axis=4)[..., 0]
    if single:
        return out[0], route[0]
    return out, route


def maxpool_backward(dout, route):
    """Route the gradient solely through each block's recorded argmax."""
    dout, single = _promote(dout)
    route = route[None] if route.ndim == 3 else route
    b, d, h, w = dout.shape
    blocks = np.zeros((b, d, h, w, 4), dtype=np.float64)
    np.put_along_axis(blocks, route[..., None], dout[..., None], axis=4)
    da = blocks.reshape(b, d, h, w, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, d, 2 * h, 2 * w)
    return da[0] if single else da


def fc_forward(a, w, bias):
    """W a + b, pre-activation."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        return w @ a + bias
    if w.shape[1] != a.shape[1]:
        raise ValueError(f"weight expects {w.shape[1]} inputs, got {a.shape[1]}")
    return a @ w.T + bias


def fc_backward(dout, a, w):
    a = np.asarray(a, dtype=np.float64)
    dout = np.asarray(dout, dtype=np.float64)
    if a.ndim == 1:
        return w.T @ dout, np.outer(dout, a), dout.copy()
    dw = dout.T @ a
    db = dout.sum(axis=0)
    da = dout @ w
    return da, dw, db


def softmax(z):
    """Row-wise stable softmax; positive, sums to one."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def nll_loss(probs, labels):
    """Negative log-likelihood summed over the batch; p clamped at 1e-30."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, NLL_CLAMP)).sum())


def nll_grad_logits(probs, labels):
    """Gradient of the summed NLL w.r.t. the softmax logits: p - onehot."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    g = probs.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    return g
