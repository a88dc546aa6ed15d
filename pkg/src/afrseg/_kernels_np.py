"""Numpy implementations of the convolution hot kernels.

All functions take and return C-contiguous float64 arrays in B x C x H x W
layout. Padding is reflect (edge pixel not repeated), stride is 1, kernels
have odd side length, and correlation orientation is used (no kernel flip).
The compiled backend in _kernels.pyx implements the same signatures.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "numpy"


def reflect_indices(n, pad):
    """Source index for each coordinate of an axis padded by `pad` on both ends."""
    if n < 1:
        raise ValueError(f"axis extent must be >= 1, got {n}")
    idx = np.empty(n + 2 * pad, dtype=np.intp)
    if n == 1:
        idx[:] = 0
        return idx
    period = 2 * n - 2
    for k in range(n + 2 * pad):
        j = (k - pad) % period
        idx[k] = period - j if j >= n else j
    return idx


def pad_reflect(x, pad):
    """Reflect-pad the two trailing axes of a 4-d array."""
    if pad == 0:
        return x
    ih = reflect_indices(x.shape[2], pad)
    iw = reflect_indices(x.shape[3], pad)
    return np.ascontiguousarray(x[:, :, ih[:, None], iw[None, :]])


def _fold(gp, h, w, pad):
    """Adjoint of pad_reflect: scatter-add padded-grid gradients to sources."""
    if pad == 0:
        return gp
    ih = reflect_indices(h, pad)
    out = np.zeros(gp.shape[:2] + (h, gp.shape[3]), dtype=np.float64)
    np.add.at(np.moveaxis(out, 2, 0), ih, np.moveaxis(gp, 2, 0))
    iw = reflect_indices(w, pad)
    out2 = np.zeros(out.shape[:3] + (w,), dtype=np.float64)
    np.add.at(np.moveaxis(out2, 3, 0), iw, np.moveaxis(out, 3, 0))
    return out2


def conv2d_forward(x, w, bias):
    """Correlate (B,Ci,H,W) with (Co,Ci,K,K) under reflect padding."""
    k = w.shape[2]
    xp = pad_reflect(x, (k - 1) // 2)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", win, w, optimize=True)
    if bias is not None:
        out += bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(x, w, gy):
    """Gradients of conv2d_forward w.r.t. input, weight, and bias."""
    b, ci, h, width = x.shape
    co, _, k, _ = w.shape
    pad = (k - 1) // 2
    xp = pad_reflect(x, pad)

    gxp = np.zeros_like(xp)
    for kh in range(k):
        for kw in range(k):
            gxp[:, :, kh:kh + h, kw:kw + width] += np.einsum(
                "oc,bohw->bchw", w[:, :, kh, kw], gy, optimize=True)
    gx = _fold(gxp, h, width, pad)

    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    gw = np.einsum("bchwij,bohw->ocij", win, gy, optimize=True)
    gb = gy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx), np.ascontiguousarray(gw), gb


def depthwise_forward(x, k2):
    """Correlate every channel of (B,C,H,W) with one shared (K,K) kernel."""
    k = k2.shape[0]
    xp = pad_reflect(x, (k - 1) // 2)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return np.ascontiguousarray(np.einsum("bchwij,ij->bchw", win, k2, optimize=True))


def depthwise_backward_input(k2, gy):
    """Input gradient of depthwise_forward (the kernel is a constant)."""
    b, c, h, w = gy.shape
    k = k2.shape[0]
    pad = (k - 1) // 2
    gxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            gxp[:, :, kh:kh + h, kw:kw + w] += k2[kh, kw] * gy
    return _fold(gxp, h, w, pad)
