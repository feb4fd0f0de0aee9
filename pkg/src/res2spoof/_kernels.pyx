# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loops for the convolution and pooling hot paths.

Mirrors ``_kernels_py`` function for function. Padding is handled inline
(out-of-range taps read as zero / are skipped) so no padded copy is made.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t K = C * kh * kw
    dtype = np.float64 if floating is double else np.float32
    cols_arr = np.empty((N * Ho * Wo, K), dtype=dtype)
    cdef floating[:, ::1] cols = cols_arr
    cdef Py_ssize_t n, c, i, j, ho, wo, r, col, hi, wi
    with nogil:
        for n in range(N):
            for ho in range(Ho):
                for wo in range(Wo):
                    r = (n * Ho + ho) * Wo + wo
                    col = 0
                    for c in range(C):
                        for i in range(kh):
                            hi = ho * stride + i - pad
                            for j in range(kw):
                                wi = wo * stride + j - pad
                                if 0 <= hi < H and 0 <= wi < W:
                                    cols[r, col] = x[n, c, hi, wi]
                                else:
                                    cols[r, col] = 0
                                col += 1
    return cols_arr


def col2im(floating[:, ::1] cols, tuple x_shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1
    dtype = np.float64 if floating is double else np.float32
    dx_arr = np.zeros((N, C, H, W), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t n, c, i, j, ho, wo, r, col, hi, wi
    with nogil:
        for n in range(N):
            for ho in range(Ho):
                for wo in range(Wo):
                    r = (n * Ho + ho) * Wo + wo
                    col = 0
                    for c in range(C):
                        for i in range(kh):
                            hi = ho * stride + i - pad
                            for j in range(kw):
                                wi = wo * stride + j - pad
                                if 0 <= hi < H and 0 <= wi < W:
                                    dx[n, c, hi, wi] += cols[r, col]
                                col += 1
    return dx_arr


def maxpool_forward(floating[:, :, :, ::1] x, int k, int stride, int pad):
    """Return (out, argmax) where argmax holds flat h*W+w indices into x."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    dtype = np.float64 if floating is double else np.float32
    out_arr = np.empty((N, C, Ho, Wo), dtype=dtype)
    idx_arr = np.empty((N, C, Ho, Wo), dtype=np.int64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t n, c, ho, wo, i, j, hi, wi, best_i
    cdef floating best, v
    cdef bint found
    with nogil:
        for n in range(N):
            for c in range(C):
                for ho in range(Ho):
                    for wo in range(Wo):
                        found = False
                        best = 0
                        best_i = -1
                        for i in range(k):
                            hi = ho * stride + i - pad
                            if hi < 0 or hi >= H:
                                continue
                            for j in range(k):
                                wi = wo * stride + j - pad
                                if wi < 0 or wi >= W:
                                    continue
                                v = x[n, c, hi, wi]
                                # strict > keeps the first (row-major) maximum
                                if not found or v > best:
                                    best = v
                                    best_i = hi * W + wi
                                    found = True
                        out[n, c, ho, wo] = best
                        idx[n, c, ho, wo] = best_i
    return out_arr, idx_arr


def maxpool_backward(floating[:, :, :, ::1] dout, cnp.int64_t[:, :, :, ::1] idx, tuple x_shape):
    cdef Py_ssize_t N = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3]
    cdef Py_ssize_t Ho = dout.shape[2], Wo = dout.shape[3]
    dtype = np.float64 if floating is double else np.float32
    dx_arr = np.zeros((N, C, H * W), dtype=dtype)
    cdef floating[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t n, c, ho, wo
    with nogil:
        for n in range(N):
            for c in range(C):
                for ho in range(Ho):
                    for wo in range(Wo):
                        dx[n, c, idx[n, c, ho, wo]] += dout[n, c, ho, wo]
    return dx_arr.reshape(N, C, H, W)
