"""Training loop: cross-entropy, Adam, warmup/inverse-sqrt schedule, dev-EER selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, restore, snapshot
from .errors import ConfigurationError, DataError, NumericError
from .metrics import eer_from_scores
from .models import BONAFIDE, CountermeasureNet, bonafide_log_prob

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    warmup_steps: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    weight_decay: float = 1e-9
    batch_size: int = 32
    lr_peak: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "warmup_steps", "batch_size", "lr_peak", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``lr_peak`` at ``warmup_steps``, then decay as 1/sqrt(step)."""
    if step < 1:
        raise ValueError("steps are counted from 1")
    w = cfg.warmup_steps
    return cfg.lr_peak * min(step / w, math.sqrt(w / step))


class Adam:
    """Bias-corrected Adam; weight decay is added to the gradient as decay * theta."""

    def __init__(self, params, cfg: TrainConfig):
        self.params = [p for p in params if p.trainable]
        self.cfg = cfg
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1 - c.adam_beta1**self.t
        bc2 = 1 - c.adam_beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad + c.weight_decay * p.data if c.weight_decay else p.grad
            m *= c.adam_beta1
            m += (1 - c.adam_beta1) * g
            v *= c.adam_beta2
            v += (1 - c.adam_beta2) * g * g
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)
            p.data -= update.astype(p.data.dtype, copy=False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for p, m, v in zip(self.params, self.m, self.v):
            state[f"adam_m/{p.name}"] = m.copy()
            state[f"adam_v/{p.name}"] = v.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray], step: int) -> None:
        for i, p in enumerate(self.params):
            self.m[i] = state[f"adam_m/{p.name}"].copy()
            self.v[i] = state[f"adam_v/{p.name}"].copy()
        self.t = step


@dataclass
class Dataset:
    """Feature tensors (N, 1, F, T) and labels (0 spoof, 1 bonafide)."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_dev: np.ndarray
    y_dev: np.ndarray

    def __post_init__(self):
        if len(self.x_train) == 0 or len(self.x_dev) == 0:
            raise DataError("train and dev splits must be non-empty")
        if len(self.x_train) != len(self.y_train) or len(self.x_dev) != len(self.y_dev):
            raise DataError("features and labels differ in length")


@dataclass
class EpochLog:
    epoch: int
    loss: float
    lr: float
    dev_eer: float

    def line(self) -> str:
        return f"epoch={self.epoch} loss={self.loss:.6f} lr={self.lr:.6g} dev_eer={self.dev_eer:.6f}"


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0


def predict_scores(model: CountermeasureNet, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Bonafide log-probabilities in eval mode, batch by batch."""
    model.eval()
    out = [bonafide_log_prob(model(x[i:i + batch_size])) for i in range(0, len(x), batch_size)]
    return np.concatenate(out)


def dev_eer(model, x, y, batch_size=32) -> float:
    s = predict_scores(model, x, batch_size)
    y = np.asarray(y)
    return eer_from_scores(s[y == BONAFIDE], s[y != BONAFIDE])[0]


def select_best(dev_eers) -> int:
    """Index of the lowest dev EER; ties go to the earlier epoch."""
    return int(np.argmin(np.asarray(dev_eers)))


def train(model: CountermeasureNet, data: Dataset, cfg: TrainConfig,
          config_hash: str = "", extra: dict | None = None, on_epoch=None) -> TrainResult:
    """Train for ``cfg.epochs`` and return the checkpoint with the lowest dev EER.

    The model is left holding the selected checkpoint's weights.
    """
    opt = Adam(model.parameters(), cfg)
    rng = np.random.default_rng(cfg.seed)
    dtype = model.parameters()[0].data.dtype
    n = len(data.x_train)
    step, history, best, best_eer, best_epoch = 0, [], None, math.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(n)
        losses, lr = [], 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = data.x_train[idx].astype(dtype, copy=False)
            yb = data.y_train[idx]
            step += 1
            lr = lr_schedule(step, cfg)
            logits = model(xb)
            loss, log_probs = T.softmax_xent(logits, yb)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {step} (lr={lr:.3g})")
            model.zero_grad()
            model.backward(T.softmax_xent_backward(log_probs, yb).astype(dtype, copy=False))
            opt.step(lr)
            losses.append(loss * len(idx))
        eer = dev_eer(model, data.x_dev.astype(dtype, copy=False), data.y_dev, cfg.batch_size)
        entry = EpochLog(epoch, sum(losses) / n, lr, eer)
        history.append(entry)
        log.info(entry.line())
        if on_epoch is not None:
            on_epoch(entry)
        if eer < best_eer:
            best_eer = eer
            best = snapshot(model, opt, step, config_hash, extra)
            best_epoch = epoch
    restore(model, best)
    return TrainResult(best, history, best_epoch)
