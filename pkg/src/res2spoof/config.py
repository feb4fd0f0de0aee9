"""Run configuration and its key=value file format.

Grammar: one ``key = value`` per line; blank lines and lines starting with
``#`` are ignored; no sections or nesting. Keys are the field names of
:class:`RunConfig`, :class:`~res2spoof.training.TrainConfig` and
:class:`~res2spoof.features.FeatureConfig` (``feature`` sets the feature
kind). Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError
from .features import FeatureConfig
from .models import ModelConfig, config_hash, get_config, tiny_clone
from .training import TrainConfig

PATH_KEYS = ("train_manifest", "dev_manifest", "audio_root", "cache_dir", "checkpoint")


@dataclass
class RunConfig:
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    arch: str = "se_res2net50"
    tiny: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    train_manifest: str = ""
    dev_manifest: str = ""
    audio_root: str = ""
    cache_dir: str = "cache"
    checkpoint: str = "model.ckpt"
    c1: float = 1.0
    c2: float = 10.0

    def model_config(self) -> ModelConfig:
        cfg = get_config(self.arch)
        return tiny_clone(cfg) if self.tiny else cfg

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("feature", "train")}
        d["feature"] = self.feature.kind
        d.update({k: v for k, v in dataclasses.asdict(self.feature).items() if k != "kind"})
        d.update({k: v for k, v in dataclasses.asdict(self.train_config()).items() if k != "seed"})
        return d

    @property
    def hash(self) -> str:
        """Hash over everything that changes the trained model."""
        return config_hash({"feature": dataclasses.asdict(self.feature),
                            "model": self.model_config().to_dict(),
                            "train": dataclasses.asdict(self.train_config())})

    def dumps(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.to_dict().items()]
        return "\n".join(lines) + f"\n# config_hash = {self.hash}\n"


def _convert(value: str, typ, key: str):
    typ = typ if isinstance(typ, type) else {"int": int, "float": float, "bool": bool, "str": str}.get(
        str(typ).split("|")[0].strip(), str)
    try:
        if typ is bool:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: cannot parse {value!r} as {typ.__name__}") from None
    return value


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"{source}:{n}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def from_mapping(values: dict[str, str], base: Path | None = None) -> RunConfig:
    run_f = {f.name: f for f in fields(RunConfig) if f.name not in ("feature", "train")}
    feat_f = {f.name: f for f in fields(FeatureConfig) if f.name != "kind"}
    train_f = {f.name: f for f in fields(TrainConfig) if f.name != "seed"}
    run_kw, feat_kw, train_kw = {}, {}, {}
    for key, value in values.items():
        if key == "feature":
            feat_kw["kind"] = value
        elif key in run_f:
            v = _convert(value, run_f[key].type, key)
            if key in PATH_KEYS and v and base is not None and not Path(v).is_absolute():
                v = str(base / v)
            run_kw[key] = v
        elif key in feat_f:
            feat_kw[key] = _convert(value, feat_f[key].type, key)
        elif key in train_f:
            train_kw[key] = _convert(value, train_f[key].type, key)
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    try:
        return RunConfig(feature=FeatureConfig(**feat_kw), train=TrainConfig(**train_kw), **run_kw)
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    return from_mapping(parse_kv(path.read_text(encoding="utf-8"), str(path)), path.parent)
