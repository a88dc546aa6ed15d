# cython: language_level=3, boundscheck=False, wraparound=False
# cython: initializedcheck=False, cdivision=True
"""Compiled convolution hot kernels.

Same contracts as _kernels_np: C-contiguous float64 arrays, B x C x H x W
layout, reflect padding, stride 1, correlation orientation. Input views are
const because Tensor buffers are frozen.
"""

import numpy as np

from ._kernels_np import reflect_indices

BACKEND_NAME = "compiled"


def _pad(x, Py_ssize_t pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    ih = reflect_indices(x.shape[2], pad)
    iw = reflect_indices(x.shape[3], pad)
    return np.ascontiguousarray(x[:, :, ih[:, None], iw[None, :]])


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w, bias):
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2], P = (w.shape[2] - 1) // 2
    xp_arr = _pad(np.asarray(x), P)
    cdef const double[:, :, :, ::1] xp = xp_arr
    out_arr = np.zeros((B, Co, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, co, ci, kh, kw, h, j
    cdef double wv
    with nogil:
        for b in range(B):
            for co in range(Co):
                for ci in range(Ci):
                    for kh in range(K):
                        for kw in range(K):
                            wv = w[co, ci, kh, kw]
                            for h in range(H):
                                for j in range(W):
                                    out[b, co, h, j] += wv * xp[b, ci, h + kh, j + kw]
    if bias is not None:
        out_arr += np.asarray(bias)[None, :, None, None]
    return out_arr


def conv2d_backward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                    const double[:, :, :, ::1] gy):
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2], P = (w.shape[2] - 1) // 2
    cdef Py_ssize_t Hp = H + 2 * P, Wp = W + 2 * P
    xp_arr = _pad(np.asarray(x), P)
    cdef const double[:, :, :, ::1] xp = xp_arr

    gxp_arr = np.zeros((B, Ci, Hp, Wp), dtype=np.float64)
    gw_arr = np.zeros((Co, Ci, K, K), dtype=np.float64)
    cdef double[:, :, :, ::1] gxp = gxp_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, co, ci, kh, kw, h, j
    cdef double wv, acc
    with nogil:
        for b in range(B):
            for co in range(Co):
                for ci in range(Ci):
                    for kh in range(K):
                        for kw in range(K):
                            wv = w[co, ci, kh, kw]
                            acc = 0.0
                            for h in range(H):
                                for j in range(W):
                                    gxp[b, ci, h + kh, j + kw] += wv * gy[b, co, h, j]
                                    acc += gy[b, co, h, j] * xp[b, ci, h + kh, j + kw]
                            gw[co, ci, kh, kw] += acc

    gx_arr = np.zeros((B, Ci, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef const Py_ssize_t[::1] ih = reflect_indices(H, P)
    cdef const Py_ssize_t[::1] iw = reflect_indices(W, P)
    cdef Py_ssize_t i
    with nogil:
        for b in range(B):
            for ci in range(Ci):
                for i in range(Hp):
                    for j in range(Wp):
                        gx[b, ci, ih[i], iw[j]] += gxp[b, ci, i, j]

    gb = np.asarray(gy).sum(axis=(0, 2, 3))
    return gx_arr, gw_arr, gb


def depthwise_forward(const double[:, :, :, ::1] x, const double[:, ::1] k2):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t K = k2.shape[0], P = (k2.shape[0] - 1) // 2
    xp_arr = _pad(np.asarray(x), P)
    cdef const double[:, :, :, ::1] xp = xp_arr
    out_arr = np.zeros((B, C, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, c, kh, kw, h, j
    cdef double wv
    with nogil:
        for b in range(B):
            for c in range(C):
                for kh in range(K):
                    for kw in range(K):
                        wv = k2[kh, kw]
                        for h in range(H):
                            for j in range(W):
                                out[b, c, h, j] += wv * xp[b, c, h + kh, j + kw]
    return out_arr


def depthwise_backward_input(const double[:, ::1] k2, const double[:, :, :, ::1] gy):
    cdef Py_ssize_t B = gy.shape[0], C = gy.shape[1], H = gy.shape[2], W = gy.shape[3]
    cdef Py_ssize_t K = k2.shape[0], P = (k2.shape[0] - 1) // 2
    cdef Py_ssize_t Hp = H + 2 * P, Wp = W + 2 * P
    gxp_arr = np.zeros((B, C, Hp, Wp), dtype=np.float64)
    cdef double[:, :, :, ::1] gxp = gxp_arr
    cdef Py_ssize_t b, c, kh, kw, h, j, i
    cdef double wv
    with nogil:
        for b in range(B):
            for c in range(C):
                for kh in range(K):
                    for kw in range(K):
                        wv = k2[kh, kw]
                        for h in range(H):
                            for j in range(W):
                                gxp[b, c, h + kh, j + kw] += wv * gy[b, c, h, j]

    gx_arr = np.zeros((B, C, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef const Py_ssize_t[::1] ih = reflect_indices(H, P)
    cdef const Py_ssize_t[::1] iw = reflect_indices(W, P)
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(Hp):
                    for j in range(Wp):
                        gx[b, c, ih[i], iw[j]] += gxp[b, c, i, j]
    return gx_arr
