"""Checkpoint container: parameters, batch-norm stats, Adam moments, step.

File layout (all integers little-endian)::

    b"R2NS" | u32 format | 16-byte config hash (ASCII hex)
    u32 meta_len | meta_len bytes UTF-8 JSON (model config, step, extra)
    u32 n_arrays
    n_arrays x [u16 name_len | name UTF-8 | u8 dtype (4=f32, 8=f64)
                | u8 ndim | ndim x u32 dims | IEEE-754 little-endian data]

Array names are prefixed ``param/``, ``buffer/``, ``adam_m/`` or ``adam_v/``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .models import CountermeasureNet, ModelConfig, build_model

MAGIC = b"R2NS"
FORMAT_VERSION = 1
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    config_hash: str = ""
    extra: dict[str, str] = field(default_factory=dict)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"param/{k}": v for k, v in self.params.items()}
        out.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        out.update(self.optimizer)
        return out


def snapshot(model: CountermeasureNet, optimizer=None, step: int = 0,
             config_hash: str = "", extra: dict | None = None) -> Checkpoint:
    """Deep copy of the model (and optimizer) state."""
    return Checkpoint(
        model_config=model.config,
        params={n: p.data.copy() for n, p in model.named_parameters()},
        buffers={n: b.copy() for n, b in model.named_buffers()},
        optimizer=optimizer.state_dict() if optimizer is not None else {},
        step=step,
        config_hash=config_hash or model.config.hash,
        extra=dict(extra or {}),
    )


def restore(model: CountermeasureNet, ckpt: Checkpoint) -> CountermeasureNet:
    params = dict(model.named_parameters())
    if set(params) != set(ckpt.params):
        raise DataError("checkpoint parameters do not match the model")
    for name, p in params.items():
        if p.data.shape != ckpt.params[name].shape:
            raise DataError(f"shape mismatch for {name}")
        p.data = ckpt.params[name].copy()
    for name, buf in model.named_buffers():
        buf[...] = ckpt.buffers[name]
    return model


def model_from_checkpoint(ckpt: Checkpoint) -> CountermeasureNet:
    dtype = next(iter(ckpt.params.values())).dtype
    model = build_model(ckpt.model_config, seed=0, dtype=dtype)
    restore(model, ckpt)
    return model.eval()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = json.dumps({"model_config": ckpt.model_config.to_dict(), "step": ckpt.step,
                       "extra": ckpt.extra}, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), ckpt.config_hash.encode().ljust(16, b"\0")[:16],
              struct.pack("<I", len(meta)), meta]
    arrays = ckpt.arrays()
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = arr.dtype.itemsize
        if arr.dtype.kind != "f" or code not in _DTYPES:
            raise DataError(f"{name}: only float32/float64 arrays can be stored")
        raw = name.encode()
        chunks += [struct.pack("<H", len(raw)), raw, struct.pack("<BB", code, arr.ndim),
                   struct.pack(f"<{arr.ndim}I", *arr.shape),
                   np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def load_checkpoint(path, expected_hash: str | None = None) -> Checkpoint:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format {version}")
    chash = buf[8:24].rstrip(b"\0").decode()
    if expected_hash is not None and chash != expected_hash:
        raise DataError(f"{path}: config hash {chash} does not match expected {expected_hash}")
    (mlen,) = struct.unpack_from("<I", buf, 24)
    pos = 28
    meta = json.loads(buf[pos:pos + mlen])
    pos += mlen
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    params, buffers, optim = {}, {}, {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        code, ndim = struct.unpack_from("<BB", buf, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        dt = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(buf, dtype=dt, count=n // dt.itemsize, offset=pos).reshape(shape)
        arr = arr.astype(dt.newbyteorder("="))
        pos += n
        kind, _, key = name.partition("/")
        if kind == "param":
            params[key] = arr
        elif kind == "buffer":
            buffers[key] = arr
        else:
            optim[name] = arr
    return Checkpoint(ModelConfig.from_dict(meta["model_config"]), params, buffers, optim,
                      int(meta["step"]), chash, meta.get("extra", {}))
