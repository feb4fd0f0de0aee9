"""Residual block families: basic, bottleneck, Res2Net and SE-Res2Net."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    Activation,
    GlobalPool,
    Identity,
    Linear,
    Module,
    Pool2d,
    Sequential,
    conv_bn,
)
from .errors import ConfigurationError

KINDS = ("basic", "bottleneck", "res2net", "se_res2net")


@dataclass(frozen=True)
class BlockSpec:
    """Declarative description of one residual block.

    ``width`` is the bracketed channel number of a stage; the block emits
    ``width * expansion`` channels. For the Res2Net kinds each of the
    ``scale`` channel groups is ``split_width`` wide: ``width // scale`` by
    default, or ``floor(width * base_width / 64)`` when ``base_width`` is set
    (the sizing rule of the reference Res2Net, which the model zoo uses).
    ``se`` adds an SE gate to basic/bottleneck blocks; ``se_res2net`` always
    has one.
    """

    kind: str
    in_channels: int
    width: int
    stride: int = 1
    expansion: int | None = None
    scale: int = 4
    se_ratio: int = 16
    base_width: int | None = None
    se: bool = False

    def __post_init__(self):
        if self.expansion is None:
            object.__setattr__(self, "expansion", 1 if self.kind == "basic" else 2)
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown block kind {self.kind!r}")
        if self.stride not in (1, 2):
            raise ConfigurationError(f"stride must be 1 or 2, got {self.stride}")
        if min(self.in_channels, self.width, self.expansion) < 1:
            raise ConfigurationError("channel counts and expansion must be positive")
        if self.is_res2net:
            if self.scale < 2:
                raise ConfigurationError("Res2Net scale must be >= 2")
            if self.base_width is None:
                if self.width % self.scale or self.out_channels % self.scale:
                    raise ConfigurationError(
                        f"width {self.width} (and output {self.out_channels}) must be divisible by scale {self.scale}"
                    )
            elif self.split_width < 1:
                raise ConfigurationError(f"base_width {self.base_width} gives an empty channel group")
        if self.has_se and self.se_ratio < 1:
            raise ConfigurationError("se_ratio must be >= 1")

    @property
    def is_res2net(self) -> bool:
        return self.kind in ("res2net", "se_res2net")

    @property
    def has_se(self) -> bool:
        return self.kind == "se_res2net" or self.se

    @property
    def out_channels(self) -> int:
        return self.width * self.expansion

    @property
    def split_width(self) -> int:
        if self.base_width is None:
            return self.width // self.scale
        return (self.width * self.base_width) // 64

    @property
    def inner_width(self) -> int:
        """Channels between the two 1x1 convs (bottleneck / Res2Net kinds)."""
        return self.split_width * self.scale if self.is_res2net else self.width

    @property
    def projection(self) -> bool:
        return self.stride != 1 or self.in_channels != self.out_channels

    @property
    def se_hidden(self) -> int:
        return max(1, self.out_channels // self.se_ratio)


def conv3x3_core_params(spec: BlockSpec) -> int:
    """Parameters in the 3x3 convolutions of a bottleneck or Res2Net block."""
    if spec.is_res2net:
        w = spec.split_width
        return (spec.scale - 1) * 9 * w * w
    return 9 * spec.width * spec.width


def block_param_count(spec: BlockSpec) -> int:
    """Closed-form count of the scalar parameters a built block holds."""
    bn = lambda c: 2 * c  # noqa: E731
    I, C, O = spec.in_channels, spec.width, spec.out_channels
    if spec.kind == "basic":
        n = 9 * I * C + bn(C) + 9 * C * C + bn(C)
    elif spec.kind == "bottleneck":
        n = I * C + bn(C) + 9 * C * C + bn(C) + C * O + bn(O)
    else:
        W, w = spec.inner_width, spec.split_width
        n = I * W + bn(W) + (spec.scale - 1) * (9 * w * w + bn(w)) + W * O + bn(O)
    if spec.has_se:
        h = spec.se_hidden
        n += O * h + h + h * O + O
    if spec.projection:
        n += I * O + bn(O)
    return n


class SEGate(Module):
    """Squeeze-and-excitation: x scaled per channel by sigmoid(MLP(mean(x)))."""

    def __init__(self, channels, ratio=16, rng=None, dtype=np.float32):
        super().__init__()
        hidden = max(1, channels // ratio)
        self.squeeze = GlobalPool("avg")
        self.fc1 = Linear(channels, hidden, rng=rng, dtype=dtype)
        self.relu = Activation("relu")
        self.fc2 = Linear(hidden, channels, rng=rng, dtype=dtype)
        self.gate = Activation("sigmoid")

    def excitation(self, x):
        return self.gate(self.fc2(self.relu(self.fc1(self.squeeze(x)))))

    def forward(self, x):
        g = self.excitation(x)
        self.cache = (x, g)
        return x * g[:, :, None, None]

    def backward(self, dout):
        x, g = self.cache
        dg = (dout * x).sum(axis=(2, 3))
        dpooled = self.fc1.backward(self.relu.backward(self.fc2.backward(self.gate.backward(dg))))
        return dout * g[:, :, None, None] + self.squeeze.backward(dpooled)


class Res2NetBranch(Module):
    """1x1 conv, hierarchical split convs, 1x1 conv (the residual branch).

    Splits x_1..x_s are taken in channel order. y_1 = x_1, y_2 = K_2(x_2),
    y_i = K_i(x_i + y_{i-1}). With stride 2 the additions are dropped and
    x_1 goes through a 3x3/stride-2 average pool.
    """

    def __init__(self, spec: BlockSpec, rng=None, dtype=np.float32):
        super().__init__()
        self.scale, self.stride = spec.scale, spec.stride
        self.split = spec.split_width
        W, w = spec.inner_width, spec.split_width
        self.reduce = conv_bn(spec.in_channels, W, 1, rng=rng, dtype=dtype)
        self.convs = [conv_bn(w, w, 3, spec.stride, 1, rng=rng, dtype=dtype) for _ in range(spec.scale - 1)]
        self.pool = Pool2d("avg", 3, 2, 1) if spec.stride == 2 else None
        self.expand = conv_bn(W, spec.out_channels, 1, relu=False, rng=rng, dtype=dtype)

    @property
    def hierarchical(self) -> bool:
        return self.stride == 1

    def forward(self, x):
        out = self.reduce(x)
        w = self.split
        xs = [out[:, i * w:(i + 1) * w] for i in range(self.scale)]
        ys = [self.pool(xs[0]) if self.pool is not None else xs[0]]
        for i in range(1, self.scale):
            inp = xs[i] + ys[-1] if (self.hierarchical and i >= 2) else xs[i]
            ys.append(self.convs[i - 1](inp))
        concat = np.concatenate(ys, axis=1)
        self.cache = concat
        return self.expand(concat)

    @property
    def last_concat(self):
        """The concatenated [y_1, ..., y_s] map from the latest forward."""
        return self.cache

    def backward(self, dout):
        dcat = self.expand.backward(dout)
        w = self.split
        dys = [dcat[:, i * w:(i + 1) * w] for i in range(self.scale)]
        dxs = [None] * self.scale
        carry = 0
        for i in range(self.scale - 1, 0, -1):
            dinp = self.convs[i - 1].backward(dys[i] + carry)
            dxs[i] = dinp
            # y_{i-1} fed K_i through the addition
            carry = dinp if (self.hierarchical and i >= 2) else 0
        dy0 = dys[0] + carry
        dxs[0] = self.pool.backward(dy0) if self.pool is not None else dy0
        return self.reduce.backward(np.concatenate(dxs, axis=1))


class ResidualBlock(Module):
    """relu(se(branch(x)) + shortcut(x))."""

    def __init__(self, spec: BlockSpec, rng=None, dtype=np.float32):
        super().__init__()
        self.spec = spec
        I, C, O, s = spec.in_channels, spec.width, spec.out_channels, spec.stride
        if spec.kind == "basic":
            self.branch = Sequential(
                conv_bn(I, C, 3, s, 1, rng=rng, dtype=dtype),
                conv_bn(C, O, 3, 1, 1, relu=False, rng=rng, dtype=dtype),
            )
        elif spec.kind == "bottleneck":
            self.branch = Sequential(
                conv_bn(I, C, 1, rng=rng, dtype=dtype),
                conv_bn(C, C, 3, s, 1, rng=rng, dtype=dtype),
                conv_bn(C, O, 1, relu=False, rng=rng, dtype=dtype),
            )
        else:
            self.branch = Res2NetBranch(spec, rng=rng, dtype=dtype)
        self.se = SEGate(O, spec.se_ratio, rng=rng, dtype=dtype) if spec.has_se else None
        if spec.projection:
            self.shortcut = conv_bn(I, O, 1, s, 0, relu=False, rng=rng, dtype=dtype)
        else:
            self.shortcut = Identity()
        self.out_relu = Activation("relu")

    def forward(self, x):
        if x.shape[1] != self.spec.in_channels:
            raise ConfigurationError(f"block expects {self.spec.in_channels} channels, got {x.shape[1]}")
        b = self.branch(x)
        if self.se is not None:
            b = self.se(b)
        return self.out_relu(b + self.shortcut(x))

    def backward(self, dout):
        d = self.out_relu.backward(dout)
        db = self.se.backward(d) if self.se is not None else d
        return self.branch.backward(db) + self.shortcut.backward(d)


def build_block(spec: BlockSpec, rng=None, dtype=np.float32) -> ResidualBlock:
    """Instantiate a block. ``rng=None`` leaves conv/linear weights at zero."""
    return ResidualBlock(spec, rng=rng, dtype=dtype)

