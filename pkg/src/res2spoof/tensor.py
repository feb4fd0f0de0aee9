"""Dense-tensor primitives with hand-written backward passes.

Activations are plain ``numpy.ndarray`` values laid out (N, C, H, W).
Every forward op returns ``(out, cache)`` and has a matching ``*_backward``
taking ``(dout, cache)``. Double precision is used for verification,
single precision for training; ops preserve the input dtype.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericError


CHECK_FINITE = os.environ.get("RES2SPOOF_CHECK_FINITE", "") not in ("", "0")


def set_check_finite(enabled: bool) -> None:
    """Toggle the NaN/Inf debug assertions on every op output."""
    global CHECK_FINITE
    CHECK_FINITE = bool(enabled)


def _finite(x: np.ndarray, op: str) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values produced by {op}")
    return x


@dataclass(eq=False)
class Parameter:
    """A named trainable array with its gradient buffer."""

    data: np.ndarray
    name: str = ""
    trainable: bool = True
    grad: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g


def out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


# --------------------------------------------------------------------------
# convolution

def conv2d(x, weight, stride=1, padding=0):
    """Bias-free 2-D cross-correlation. ``weight`` is (Co, Ci, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    N, C, H, W = x.shape
    Co, Ci, kh, kw = weight.shape
    if C != Ci:
        raise ConfigurationError(f"conv2d: input has {C} channels, weight expects {Ci}")
    Ho, Wo = out_size(H, kh, stride, padding), out_size(W, kw, stride, padding)
    if Ho < 1 or Wo < 1:
        raise ConfigurationError(
            f"conv2d: spatial size {H}x{W} collapses to {Ho}x{Wo} (kernel {kh}x{kw}, stride {stride}, pad {padding})"
        )
    x = np.ascontiguousarray(x)
    if kh == 1 and kw == 1 and padding == 0:
        xs = x[:, :, ::stride, ::stride] if stride > 1 else x
        cols = np.ascontiguousarray(xs.transpose(0, 2, 3, 1)).reshape(-1, C)
    else:
        cols = kernels.im2col(x, kh, kw, stride, padding)
    out = cols @ weight.reshape(Co, -1).T
    out = np.ascontiguousarray(out.reshape(N, Ho, Wo, Co).transpose(0, 3, 1, 2))
    return _finite(out, "conv2d"), (x.shape, cols, weight, stride, padding)


def conv2d_backward(dout, cache):
    """Return (dx, dweight)."""
    x_shape, cols, weight, stride, padding = cache
    N, C, H, W = x_shape
    Co, Ci, kh, kw = weight.shape
    d2 = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, Co)
    dw = (d2.T @ cols).reshape(weight.shape)
    dcols = np.ascontiguousarray(d2 @ weight.reshape(Co, -1))
    if kh == 1 and kw == 1 and padding == 0:
        Ho, Wo = dout.shape[2], dout.shape[3]
        dxs = dcols.reshape(N, Ho, Wo, C).transpose(0, 3, 1, 2)
        if stride > 1:
            dx = np.zeros(x_shape, dtype=dout.dtype)
            dx[:, :, ::stride, ::stride] = dxs
        else:
            dx = np.ascontiguousarray(dxs)
    else:
        dx = kernels.col2im(dcols, tuple(x_shape), kh, kw, stride, padding)
    return dx, dw


# --------------------------------------------------------------------------
# pooling

def pool2d(x, kind, kernel, stride, padding=0):
    """Windowed max or mean. Average pooling divides by kernel**2 (padding counts)."""
    N, C, H, W = x.shape
    Ho, Wo = out_size(H, kernel, stride, padding), out_size(W, kernel, stride, padding)
    if Ho < 1 or Wo < 1:
        raise ConfigurationError(f"pool2d: spatial size {H}x{W} collapses to {Ho}x{Wo}")
    if padding >= kernel:
        raise ConfigurationError("pool2d: padding must be smaller than the kernel")
    x = np.ascontiguousarray(x)
    if kind == "max":
        out, idx = kernels.maxpool_forward(x, kernel, stride, padding)
        return _finite(out, "max_pool"), ("max", x.shape, idx, kernel, stride, padding)
    if kind == "avg":
        xr = x.reshape(N * C, 1, H, W)
        cols = kernels.im2col(xr, kernel, kernel, stride, padding)
        out = cols.mean(axis=1).reshape(N, C, Ho, Wo)
        return out, ("avg", x.shape, None, kernel, stride, padding)
    raise ConfigurationError(f"unknown pool kind {kind!r}")


def pool2d_backward(dout, cache):
    kind, x_shape, idx, kernel, stride, padding = cache
    dout = np.ascontiguousarray(dout)
    if kind == "max":
        return kernels.maxpool_backward(dout, idx, tuple(x_shape))
    N, C, H, W = x_shape
    k2 = kernel * kernel
    dcols = np.repeat(dout.reshape(-1, 1) / k2, k2, axis=1)
    return kernels.col2im(np.ascontiguousarray(dcols), (N * C, 1, H, W), kernel, kernel, stride, padding).reshape(x_shape)


STATS_EPS = 1e-8


def global_pool(x, kind="avg"):
    """Pool over H x W: ``avg`` -> (N, C); ``stats`` -> (N, 2C) as [mean, std]."""
    N, C, H, W = x.shape
    flat = x.reshape(N, C, H * W)
    mean = flat.mean(axis=2)
    if kind == "avg":
        return mean, (kind, x.shape, None, None)
    if kind == "stats":
        centered = flat - mean[:, :, None]
        std = np.sqrt((centered**2).mean(axis=2) + STATS_EPS)
        return np.concatenate([mean, std], axis=1), (kind, x.shape, centered, std)
    raise ConfigurationError(f"unknown global pool kind {kind!r}")


def global_pool_backward(dout, cache):
    kind, shape, centered, std = cache
    N, C, H, W = shape
    M = H * W
    if kind == "avg":
        dx = np.broadcast_to((dout / M)[:, :, None], (N, C, M))
        return np.ascontiguousarray(dx).reshape(shape)
    dmean, dstd = dout[:, :C], dout[:, C:]
    dx = dmean[:, :, None] / M + (dstd / std)[:, :, None] * centered / M
    return dx.reshape(shape)


# --------------------------------------------------------------------------
# normalization, activations, dense

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batchnorm2d(x, gamma, beta, running_mean, running_var, training,
                momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel batch norm. In training mode ``running_*`` are updated in place."""
    N, C, H, W = x.shape
    if gamma.shape != (C,):
        raise ConfigurationError(f"batchnorm2d: {C} channels but gamma has shape {gamma.shape}")
    if training:
        m = N * H * W
        if m < 2:
            raise ConfigurationError("batchnorm2d: training mode needs N*H*W >= 2")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * m / (m - 1)
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return _finite(out.astype(x.dtype, copy=False), "batchnorm2d"), (xhat, inv, gamma, training)


def batchnorm2d_backward(dout, cache):
    """Return (dx, dgamma, dbeta)."""
    xhat, inv, gamma, training = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if not training:
        return dxhat * inv[None, :, None, None], dgamma, dbeta
    N, C, H, W = dout.shape
    m = N * H * W
    dx = (inv[None, :, None, None] / m) * (
        m * dxhat
        - dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        - xhat * (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
    )
    return dx, dgamma, dbeta


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(x, kind):
    if kind == "relu":
        out = np.maximum(x, 0)
    elif kind == "sigmoid":
        out = sigmoid(x)
    else:
        raise ConfigurationError(f"unknown activation {kind!r}")
    return out, (kind, out)


def activation_backward(dout, cache):
    kind, out = cache
    if kind == "relu":
        # relu'(0) = 0
        return dout * (out > 0)
    return dout * out * (1 - out)


def linear(x, weight, bias):
    """Affine map; ``weight`` is (D, K)."""
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ConfigurationError(f"linear: input {x.shape} does not match weight {weight.shape}")
    return x @ weight + bias, (x, weight)


def linear_backward(dout, cache):
    """Return (dx, dweight, dbias)."""
    x, weight = cache
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_xent(logits, labels):
    """Mean cross-entropy. Labels are class indices (0 spoof, 1 bonafide).

    Returns ``(loss, log_probs)``; pass both plus ``labels`` to
    :func:`softmax_xent_backward`.
    """
    labels = np.asarray(labels, dtype=np.int64)
    log_probs = log_softmax(logits)
    loss = -log_probs[np.arange(len(labels)), labels].mean()
    return float(loss), log_probs


def softmax_xent_backward(log_probs, labels):
    labels = np.asarray(labels, dtype=np.int64)
    grad = np.exp(log_probs)
    grad[np.arange(len(labels)), labels] -= 1
    return grad / len(labels)


# --------------------------------------------------------------------------
# verification

def grad_check(f: Callable[[np.ndarray], tuple[float, np.ndarray]], x: np.ndarray,
               h: float = 1e-5, coords=None) -> float:
    """Max relative error between the analytic gradient and central differences.

    ``f(x)`` returns ``(value, grad)``; only the value is used for the
    numerical side. ``coords`` optionally restricts the check to a subset of
    flat indices. Error per coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    _, analytic = f(x.copy())
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x.copy())[0]
        flat[i] = orig - h
        fm = f(x.copy())[0]
        flat[i] = orig
        num = (fp - fm) / (2 * h)
        a = analytic[i]
        worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst
