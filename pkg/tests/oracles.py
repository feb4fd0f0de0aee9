"""Brute-force reference implementations used only by the tests.

Written directly from the textbook definitions with explicit loops; none of
them call into the package's vectorized code paths.
"""

import math

import numpy as np


def conv2d_loop(x, w, stride, pad):
    N, C, H, W = x.shape
    Co, _, kh, kw = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((N, Co, Ho, Wo))
    for n in range(N):
        for o in range(Co):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(C):
                        for a in range(kh):
                            for b in range(kw):
                                r, s = i * stride - pad + a, j * stride - pad + b
                                if 0 <= r < H and 0 <= s < W:
                                    acc += x[n, c, r, s] * w[o, c, a, b]
                    out[n, o, i, j] = acc
    return out


def pool_loop(x, kind, k, stride, pad):
    """Max ignores padding; avg counts padded zeros (divides by k*k)."""
    N, C, H, W = x.shape
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    out = np.zeros((N, C, Ho, Wo))
    for n in range(N):
        for c in range(C):
            for i in range(Ho):
                for j in range(Wo):
                    vals = []
                    for a in range(k):
                        for b in range(k):
                            r, s = i * stride - pad + a, j * stride - pad + b
                            if 0 <= r < H and 0 <= s < W:
                                vals.append(x[n, c, r, s])
                    out[n, c, i, j] = max(vals) if kind == "max" else sum(vals) / (k * k)
    return out


def maxpool_grad_loop(x, dout, k, stride, pad):
    """Route each output gradient to the first (row-major) maximal input."""
    N, C, H, W = x.shape
    dx = np.zeros_like(x, dtype=np.float64)
    for n in range(N):
        for c in range(C):
            for i in range(dout.shape[2]):
                for j in range(dout.shape[3]):
                    best, where = -math.inf, None
                    for a in range(k):
                        for b in range(k):
                            r, s = i * stride - pad + a, j * stride - pad + b
                            if 0 <= r < H and 0 <= s < W and x[n, c, r, s] > best:
                                best, where = x[n, c, r, s], (r, s)
                    dx[n, c, where[0], where[1]] += dout[n, c, i, j]
    return dx


def mean_std_loop(x, eps=1e-8):
    N, C = x.shape[:2]
    out = np.zeros((N, 2 * C))
    for n in range(N):
        for c in range(C):
            vals = list(x[n, c].ravel())
            m = math.fsum(vals) / len(vals)
            v = math.fsum((u - m) ** 2 for u in vals) / len(vals)
            out[n, c], out[n, C + c] = m, math.sqrt(v + eps)
    return out


def matmul_loop(x, w, b):
    out = np.zeros((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        for k in range(w.shape[1]):
            out[i, k] = b[k] + sum(x[i, d] * w[d, k] for d in range(x.shape[1]))
    return out


def dct2_ortho(v):
    n = len(v)
    out = np.zeros(n)
    for k in range(n):
        s = sum(v[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        out[k] = s * math.sqrt((1 if k == 0 else 2) / n)
    return out


def deltas_loop(c, width=2):
    F, T = c.shape
    denom = 2 * sum(n * n for n in range(1, width + 1))
    out = np.zeros((F, T))
    for f in range(F):
        for t in range(T):
            acc = 0.0
            for n in range(1, width + 1):
                acc += n * (c[f, min(t + n, T - 1)] - c[f, max(t - n, 0)])
            out[f, t] = acc / denom
    return out


def dft_power(frame, n_fft):
    x = np.zeros(n_fft)
    x[:len(frame)] = frame
    out = np.zeros(n_fft // 2 + 1)
    for k in range(n_fft // 2 + 1):
        re = sum(x[i] * math.cos(2 * math.pi * k * i / n_fft) for i in range(n_fft))
        im = sum(x[i] * math.sin(2 * math.pi * k * i / n_fft) for i in range(n_fft))
        out[k] = re * re + im * im
    return out


def _rates(bona, spoof, t):
    frr = sum(1 for s in bona if s < t) / len(bona)
    far = sum(1 for s in spoof if s >= t) / len(spoof)
    return frr, far


def _thresholds(bona, spoof):
    levels = sorted(set(list(bona) + list(spoof)))
    mids = [(levels[i] + levels[i + 1]) / 2 for i in range(len(levels) - 1)]
    return [-math.inf] + mids + [math.inf]


def eer_sweep(bona, spoof):
    """Walk thresholds upward until FAR - FRR stops being positive, then interpolate."""
    prev = None
    for t in _thresholds(bona, spoof):
        frr, far = _rates(bona, spoof, t)
        if far - frr <= 0:
            if far == frr or prev is None:
                return frr
            pfrr, pfar = prev
            d0, d1 = pfar - pfrr, far - frr
            a = d0 / (d0 - d1)
            return pfrr + a * (frr - pfrr)
        prev = (frr, far)
    raise AssertionError("sweep never crossed")


def min_tdcf_sweep(bona, spoof, c1, c2):
    best = math.inf
    for t in _thresholds(bona, spoof):
        frr, far = _rates(bona, spoof, t)
        best = min(best, c1 * frr + c2 * far)
    return best / min(c1, c2)


def batchnorm_ref(x, gamma, beta, mean, var, eps=1e-5):
    out = np.empty_like(x, dtype=np.float64)
    for c in range(x.shape[1]):
        out[:, c] = (x[:, c] - mean[c]) / math.sqrt(var[c] + eps) * gamma[c] + beta[c]
    return out


def conv_bn_ref(x, unit, relu=True):
    """A conv_bn Sequential evaluated with batch statistics (train mode)."""
    conv, bn = unit.layers[0], unit.layers[1]
    y = conv2d_loop(x, conv.weight.data, conv.stride, conv.padding)
    mean = y.mean(axis=(0, 2, 3))
    var = y.var(axis=(0, 2, 3))
    y = batchnorm_ref(y, bn.gamma.data, bn.beta.data, mean, var)
    return np.maximum(y, 0) if relu else y


def se_ref(x, se):
    pooled = x.mean(axis=(2, 3))
    h = np.maximum(matmul_loop(pooled, se.fc1.weight.data, se.fc1.bias.data), 0)
    z = matmul_loop(h, se.fc2.weight.data, se.fc2.bias.data)
    g = 1 / (1 + np.exp(-z))
    return x * g[:, :, None, None]


def res2net_block_ref(x, block):
    """Direct transcription of the hierarchical split recurrence for a stride-1 block."""
    br = block.branch
    out = conv_bn_ref(x, br.reduce)
    w, s = br.split, br.scale
    xs = [out[:, i * w:(i + 1) * w] for i in range(s)]
    ys = [xs[0]]
    for i in range(1, s):
        inp = xs[i] if i == 1 else xs[i] + ys[i - 1]
        ys.append(conv_bn_ref(inp, br.convs[i - 1]))
    y = conv_bn_ref(np.concatenate(ys, axis=1), br.expand, relu=False)
    if block.se is not None:
        y = se_ref(y, block.se)
    sc = x if not block.spec.projection else conv_bn_ref(x, block.shortcut, relu=False)
    return np.maximum(y + sc, 0)
