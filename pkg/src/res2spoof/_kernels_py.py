"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and results; used when the extension is not built or when
``RES2SPOOF_PURE_PYTHON=1`` is set.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(xp, kh, kw, stride):
    # (N, C, Ho, Wo, kh, kw) view over an already padded input
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def im2col(x, kh, kw, stride, pad):
    N, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _windows(xp, kh, kw, stride)
    Ho, Wo = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(N * Ho * Wo, C * kh * kw)


def col2im(cols, x_shape, kh, kw, stride, pad):
    N, C, H, W = x_shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    c6 = cols.reshape(N, Ho, Wo, C, kh, kw)
    dxp = np.zeros((N, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += c6[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad:pad + H, pad:pad + W])
    return dxp


def maxpool_forward(x, k, stride, pad):
    N, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf) if pad else x
    win = _windows(xp, k, k, stride)
    Ho, Wo = win.shape[2], win.shape[3]
    flat = win.reshape(N, C, Ho, Wo, k * k)
    arg = flat.argmax(axis=-1)  # first occurrence on ties
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(arg, k)
    hi = np.arange(Ho)[:, None] * stride + di - pad
    wi = np.arange(Wo)[None, :] * stride + dj - pad
    return np.ascontiguousarray(out), (hi * W + wi).astype(np.int64)


def maxpool_backward(dout, idx, x_shape):
    N, C, H, W = x_shape
    dx = np.zeros((N * C, H * W), dtype=dout.dtype)
    rows = np.repeat(np.arange(N * C), idx.shape[2] * idx.shape[3])
    np.add.at(dx, (rows, idx.reshape(-1)), dout.reshape(-1))
    return dx.reshape(N, C, H, W)
