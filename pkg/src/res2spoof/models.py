"""Complete countermeasure architectures and bonafide scoring."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .blocks import BlockSpec, ResidualBlock, block_param_count
from .layers import GlobalPool, Linear, Module, Pool2d, Sequential, conv_bn
from .errors import ConfigurationError
from .tensor import log_softmax

SPOOF, BONAFIDE = 0, 1


def config_hash(obj: dict) -> str:
    """Short stable hash of a JSON-serializable dict."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ModelConfig:
    arch_id: str
    block: str
    stem: str
    widths: tuple[int, ...] = (16, 32, 64, 128)
    repeats: tuple[int, ...] = (3, 4, 6, 3)
    pooling: str = "avg"
    se: bool = False
    scale: int = 4
    base_width: int | None = 26
    se_ratio: int = 16
    stem_channels: int = 16
    num_classes: int = 2
    input_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        object.__setattr__(self, "repeats", tuple(self.repeats))
        if self.stem not in ("resnet", "v1b"):
            raise ConfigurationError(f"unknown stem {self.stem!r}")
        if self.pooling not in ("avg", "stats"):
            raise ConfigurationError(f"unknown pooling {self.pooling!r}")
        if len(self.widths) != len(self.repeats) or not self.widths:
            raise ConfigurationError("widths and repeats must be non-empty and the same length")
        if min(self.repeats) < 1:
            raise ConfigurationError("every stage needs at least one block")
        self.block_specs()  # validates every block

    def block_specs(self) -> list[list[BlockSpec]]:
        """Per-stage block specs; the first block of every stage after the first has stride 2."""
        stages, in_ch = [], self.stem_channels
        for i, (width, repeat) in enumerate(zip(self.widths, self.repeats)):
            stage = []
            for j in range(repeat):
                spec = BlockSpec(
                    kind=self.block,
                    in_channels=in_ch,
                    width=width,
                    stride=2 if (i > 0 and j == 0) else 1,
                    scale=self.scale,
                    se_ratio=self.se_ratio,
                    base_width=self.base_width,
                    se=self.se,
                )
                stage.append(spec)
                in_ch = spec.out_channels
            stages.append(stage)
        return stages

    @property
    def feature_channels(self) -> int:
        return self.block_specs()[-1][-1].out_channels

    @property
    def head_inputs(self) -> int:
        return self.feature_channels * (2 if self.pooling == "stats" else 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"], d["repeats"] = list(self.widths), list(self.repeats)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


ARCHITECTURES = {
    "resnet34": ModelConfig("resnet34", "basic", "resnet"),
    "se_resnet34": ModelConfig("se_resnet34", "basic", "resnet", se=True),
    "resnet50": ModelConfig("resnet50", "bottleneck", "resnet"),
    "se_resnet50": ModelConfig("se_resnet50", "bottleneck", "resnet", se=True),
    "res2net50": ModelConfig("res2net50", "res2net", "v1b"),
    "se_res2net50": ModelConfig("se_res2net50", "se_res2net", "v1b"),
    "stat_se_res2net50": ModelConfig("stat_se_res2net50", "se_res2net", "v1b", pooling="stats"),
}

# reported sizes for the "# params" comparison
REPORTED_PARAMS = {
    "resnet34": 1.33e6,
    "se_resnet34": 1.34e6,
    "resnet50": 1.05e6,
    "se_resnet50": 1.09e6,
    "res2net50": 0.88e6,
    "se_res2net50": 0.92e6,
    "stat_se_res2net50": 0.96e6,
}


def get_config(arch_id: str) -> ModelConfig:
    try:
        return ARCHITECTURES[arch_id]
    except KeyError:
        raise ConfigurationError(f"unknown architecture {arch_id!r}; choose from {sorted(ARCHITECTURES)}") from None


def tiny_clone(config: ModelConfig, widths=(4, 4, 4, 4), repeats=(1, 1, 1, 1)) -> ModelConfig:
    """Same architecture family with tiny stages, for gradient checks and fast runs."""
    return replace(config, arch_id=f"tiny_{config.arch_id}", widths=tuple(widths),
                   repeats=tuple(repeats), stem_channels=widths[0])


def stem_param_count(config: ModelConfig) -> int:
    c, i = config.stem_channels, config.input_channels
    if config.stem == "resnet":
        return 49 * i * c + 2 * c
    return 9 * i * c + 2 * 9 * c * c + 3 * 2 * c


def stage_param_counts(config: ModelConfig) -> list[tuple[str, int]]:
    """Closed-form (row name, count) pairs: stem, Conv2..Conv5, head."""
    rows = [("conv1", stem_param_count(config))]
    for i, stage in enumerate(config.block_specs()):
        rows.append((f"conv{i + 2}", sum(block_param_count(s) for s in stage)))
    rows.append(("head", config.head_inputs * config.num_classes + config.num_classes))
    return rows


def config_param_count(config: ModelConfig) -> int:
    return sum(n for _, n in stage_param_counts(config))


class CountermeasureNet(Module):
    """Stem -> residual stages -> global pooling -> 2-unit fully connected."""

    def __init__(self, config: ModelConfig, rng=None, dtype=np.float32):
        super().__init__()
        self.config = config
        c = config.stem_channels
        if config.stem == "resnet":
            self.stem = Sequential(
                conv_bn(config.input_channels, c, 7, 2, 3, rng=rng, dtype=dtype),
                Pool2d("max", 3, 2, 1),
            )
        else:
            self.stem = Sequential(
                conv_bn(config.input_channels, c, 3, 1, 1, rng=rng, dtype=dtype),
                conv_bn(c, c, 3, 1, 1, rng=rng, dtype=dtype),
                conv_bn(c, c, 3, 1, 1, rng=rng, dtype=dtype),
                Pool2d("max", 3, 2, 1),
            )
        self.stages = [
            Sequential(*[ResidualBlock(spec, rng=rng, dtype=dtype) for spec in stage])
            for stage in config.block_specs()
        ]
        self.pool = GlobalPool(config.pooling)
        self.fc = Linear(config.head_inputs, config.num_classes, rng=rng, dtype=dtype)
        for name, p in self.named_parameters():
            p.name = name

    def embed(self, x):
        """Pooled feature vector feeding the classifier."""
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ConfigurationError(
                f"expected input (N, {self.config.input_channels}, F, T), got {x.shape}"
            )
        try:
            h = self.stem(x)
            for stage in self.stages:
                h = stage(h)
        except ConfigurationError as exc:
            raise ConfigurationError(
                f"input of size {x.shape[2]}x{x.shape[3]} is too small for {self.config.arch_id}: {exc}"
            ) from exc
        return self.pool(h)

    def forward(self, x):
        return self.fc(self.embed(x))

    def backward(self, dlogits):
        d = self.pool.backward(self.fc.backward(dlogits))
        for stage in reversed(self.stages):
            d = stage.backward(d)
        return self.stem.backward(d)

    def stage_modules(self) -> list[tuple[str, Module]]:
        return [("conv1", self.stem)] + [(f"conv{i + 2}", s) for i, s in enumerate(self.stages)] + [("head", self.fc)]


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> CountermeasureNet:
    """He-normal convs, unit/zero batch norm, zero linear bias; deterministic in ``seed``."""
    return CountermeasureNet(config, rng=np.random.default_rng(seed), dtype=dtype)


def count_parameters(model: Module) -> int:
    return model.num_parameters()


def forward(model: CountermeasureNet, features: np.ndarray, mode: str = "eval") -> np.ndarray:
    model.train(mode == "train")
    return model(features)


def bonafide_log_prob(logits: np.ndarray) -> np.ndarray:
    return log_softmax(np.asarray(logits, dtype=np.float64))[:, BONAFIDE]


def score_bonafide(model: CountermeasureNet, features: np.ndarray) -> np.ndarray:
    """Log-probability of the bonafide class for each input (always <= 0)."""
    model.eval()
    return bonafide_log_prob(model(features))
