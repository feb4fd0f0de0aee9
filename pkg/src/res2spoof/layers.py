"""Stateful layer wrappers around the functional ops in :mod:`tensor`.

A layer remembers the cache of its last ``forward`` so ``backward`` can run
in reverse layer order. Caches live in thread-local storage, so a frozen
model can be scored from several threads at once.
"""

from __future__ import annotations

import threading
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter


class Module:
    def __init__(self):
        self.training = True
        self._local = threading.local()

    # per-thread forward cache
    @property
    def cache(self):
        return getattr(self._local, "cache", None)

    @cache.setter
    def cache(self, value):
        self._local.cache = value

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters() if p.trainable)

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for m in self.modules():
            if isinstance(m, BatchNorm2d):
                m.running_mean = m.running_mean.astype(dtype)
                m.running_var = m.running_var.astype(dtype)
        return self


def he_normal(rng: np.random.Generator, shape, fan: int, dtype=np.float32) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan)).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, rng=None, dtype=np.float32):
        super().__init__()
        self.stride, self.padding = stride, padding
        shape = (out_ch, in_ch, kernel, kernel)
        if rng is None:
            w = np.zeros(shape, dtype=dtype)
        else:
            # He-normal, fan_out mode
            w = he_normal(rng, shape, out_ch * kernel * kernel, dtype)
        self.weight = Parameter(w)

    def forward(self, x):
        out, self.cache = T.conv2d(x, self.weight.data, self.stride, self.padding)
        return out

    def backward(self, dout):
        dx, dw = T.conv2d_backward(dout, self.cache)
        self.weight.accumulate(dw)
        return dx


class BatchNorm2d(Module):
    def __init__(self, channels, dtype=np.float32):
        super().__init__()
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def named_buffers(self, prefix=""):
        yield prefix + "running_mean", self.running_mean
        yield prefix + "running_var", self.running_var

    def forward(self, x):
        out, self.cache = T.batchnorm2d(
            x, self.gamma.data, self.beta.data, self.running_mean, self.running_var, self.training
        )
        return out

    def backward(self, dout):
        dx, dg, db = T.batchnorm2d_backward(dout, self.cache)
        self.gamma.accumulate(dg)
        self.beta.accumulate(db)
        return dx


class Activation(Module):
    def __init__(self, kind="relu"):
        super().__init__()
        self.kind = kind

    def forward(self, x):
        out, self.cache = T.activation(x, self.kind)
        return out

    def backward(self, dout):
        return T.activation_backward(dout, self.cache)


def ReLU():
    return Activation("relu")


def Sigmoid():
    return Activation("sigmoid")


class Pool2d(Module):
    def __init__(self, kind, kernel, stride, padding=0):
        super().__init__()
        self.kind, self.kernel, self.stride, self.padding = kind, kernel, stride, padding

    def forward(self, x):
        out, self.cache = T.pool2d(x, self.kind, self.kernel, self.stride, self.padding)
        return out

    def backward(self, dout):
        return T.pool2d_backward(dout, self.cache)


class GlobalPool(Module):
    def __init__(self, kind="avg"):
        super().__init__()
        self.kind = kind

    def forward(self, x):
        out, self.cache = T.global_pool(x, self.kind)
        return out

    def backward(self, dout):
        return T.global_pool_backward(dout, self.cache)


class Linear(Module):
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        super().__init__()
        if rng is None:
            w = np.zeros((in_features, out_features), dtype=dtype)
        else:
            w = (rng.standard_normal((in_features, out_features)) / np.sqrt(in_features)).astype(dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_features, dtype=dtype))

    def forward(self, x):
        out, self.cache = T.linear(x, self.weight.data, self.bias.data)
        return out

    def backward(self, dout):
        dx, dw, db = T.linear_backward(dout, self.cache)
        self.weight.accumulate(dw)
        self.bias.accumulate(db)
        return dx


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        for i, layer in enumerate(self.layers):
            yield str(i), layer

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


class Identity(Module):
    def forward(self, x):
        return x

    def backward(self, dout):
        return dout


def conv_bn(in_ch, out_ch, kernel, stride=1, padding=0, relu=True, rng=None, dtype=np.float32):
    """conv -> BN (-> ReLU) unit."""
    layers = [Conv2d(in_ch, out_ch, kernel, stride, padding, rng=rng, dtype=dtype), BatchNorm2d(out_ch, dtype)]
    if relu:
        layers.append(ReLU())
    return Sequential(*layers)
