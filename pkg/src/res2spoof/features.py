"""Acoustic front-ends: log power spectrogram, LFCC (+ deltas) and CQT.

All three produce an (F, T) matrix; :func:`fix_frames` then truncates or
tiles it to exactly 400 frames. Audio I/O is PCM16 mono RIFF/WAVE only.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .errors import DataError, SampleRateError, WavFormatError
from .models import config_hash

SAMPLE_RATE = 16000
LOG_FLOOR = 1e-10
N_FRAMES = 400
FEATURE_KINDS = ("spec", "lfcc", "cqt")


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DataError(f"clip {self.id!r}: expected a non-empty 1-D signal")
        if self.sample_rate <= 0:
            raise DataError(f"clip {self.id!r}: sample rate must be positive")


@dataclass(frozen=True)
class FeatureConfig:
    """Every knob of the three front-ends. The hash identifies cache entries."""

    kind: str = "spec"
    sample_rate: int = SAMPLE_RATE
    n_frames: int = N_FRAMES
    n_fft: int = 512
    # spec
    spec_win: int = 400
    spec_hop: int = 160
    # lfcc
    lfcc_win: int = 320
    lfcc_hop: int = 160
    lfcc_filters: int = 20
    lfcc_ceps: int = 20
    delta_width: int = 2
    # cqt
    cqt_hop: int = 256
    cqt_bins_per_octave: int = 48
    cqt_octaves: int = 9

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise DataError(f"unknown feature kind {self.kind!r}; choose from {FEATURE_KINDS}")

    @property
    def bins(self) -> int:
        if self.kind == "spec":
            return self.n_fft // 2 + 1
        if self.kind == "lfcc":
            return 3 * self.lfcc_ceps
        return self.cqt_bins_per_octave * self.cqt_octaves

    @property
    def cqt_fmin(self) -> float:
        # top octave ends at Nyquist
        return self.sample_rate / 2 / 2**self.cqt_octaves

    @property
    def hash(self) -> str:
        return config_hash(asdict(self))


@dataclass
class FeatureMatrix:
    kind: str
    values: np.ndarray  # (F, T)
    config_hash: str = ""

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


# --------------------------------------------------------------------------
# helpers

def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def _check_rate(clip: AudioClip, cfg: FeatureConfig) -> None:
    if clip.sample_rate != cfg.sample_rate:
        raise SampleRateError(
            f"clip {clip.id!r} is {clip.sample_rate} Hz; resample to {cfg.sample_rate} Hz first"
        )


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    """(T, win) frames without centering; short signals are zero-padded to one window."""
    if x.size < win:
        x = np.pad(x, (0, win - x.size))
    return sliding_window_view(x, win)[::hop]


def power_spectrum(frames: np.ndarray, window: np.ndarray, n_fft: int) -> np.ndarray:
    spec = np.fft.rfft(frames * window, n=n_fft, axis=1)
    return spec.real**2 + spec.imag**2


# --------------------------------------------------------------------------
# front-ends (raw frame count; see fix_frames)

def log_power_spectrogram(clip: AudioClip, cfg: FeatureConfig | None = None) -> FeatureMatrix:
    cfg = replace(cfg or FeatureConfig(), kind="spec")
    _check_rate(clip, cfg)
    frames = frame_signal(clip.samples, cfg.spec_win, cfg.spec_hop)
    power = power_spectrum(frames, periodic_hann(cfg.spec_win), cfg.n_fft)
    return FeatureMatrix("spec", np.log(power.T + LOG_FLOOR), cfg.hash)


def linear_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """(n_filters, n_fft//2+1) triangles, edges evenly spaced from 0 to Nyquist."""
    edges = np.linspace(0, sample_rate / 2, n_filters + 2)
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def deltas(static: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas along time (axis 1) with edge replication."""
    static = np.asarray(static, dtype=np.float64)
    T = static.shape[1]
    padded = np.pad(static, ((0, 0), (width, width)), mode="edge")
    num = np.zeros_like(static)
    for n in range(1, width + 1):
        num += n * (padded[:, width + n:width + n + T] - padded[:, width - n:width - n + T])
    return num / (2 * sum(n * n for n in range(1, width + 1)))


def lfcc(clip: AudioClip, cfg: FeatureConfig | None = None) -> FeatureMatrix:
    """Static LFCCs (c0 included) stacked with delta and delta-delta rows."""
    cfg = replace(cfg or FeatureConfig(), kind="lfcc")
    _check_rate(clip, cfg)
    frames = frame_signal(clip.samples, cfg.lfcc_win, cfg.lfcc_hop)
    power = power_spectrum(frames, np.hamming(cfg.lfcc_win), cfg.n_fft)
    fb = linear_filterbank(cfg.lfcc_filters, cfg.n_fft, cfg.sample_rate)
    log_e = np.log(power @ fb.T + LOG_FLOOR)
    static = dct(log_e, type=2, norm="ortho", axis=1)[:, :cfg.lfcc_ceps].T
    d1 = deltas(static, cfg.delta_width)
    d2 = deltas(d1, cfg.delta_width)
    return FeatureMatrix("lfcc", np.vstack([static, d1, d2]), cfg.hash)


def cqt_frequencies(cfg: FeatureConfig) -> np.ndarray:
    k = np.arange(cfg.cqt_bins_per_octave * cfg.cqt_octaves)
    return cfg.cqt_fmin * 2.0 ** (k / cfg.cqt_bins_per_octave)


def cqt(clip: AudioClip, cfg: FeatureConfig | None = None) -> FeatureMatrix:
    """Log power constant-Q transform by direct evaluation of each bin's kernel.

    Frame t is centred on sample t * hop. Bin k correlates the signal with a
    Hann-windowed complex exponential at f_k of length round(Q * fs / f_k),
    capped at the clip length, normalized by that length.
    """
    cfg = replace(cfg or FeatureConfig(), kind="cqt")
    _check_rate(clip, cfg)
    x = clip.samples
    L, hop = x.size, cfg.cqt_hop
    n_out = max(1, -(-L // hop))
    q = 1.0 / (2.0 ** (1.0 / cfg.cqt_bins_per_octave) - 1.0)
    freqs = cqt_frequencies(cfg)
    lengths = np.minimum(np.round(q * cfg.sample_rate / freqs).astype(int), L)
    power = np.empty((freqs.size, n_out))
    for k, (f, n) in enumerate(zip(freqs, lengths)):
        n = max(int(n), 1)
        t = np.arange(n)
        w = periodic_hann(n) / n
        basis = np.stack([w * np.cos(2 * np.pi * f * t / cfg.sample_rate),
                          w * np.sin(2 * np.pi * f * t / cfg.sample_rate)], axis=1)
        xp = np.pad(x, (n // 2, n))
        frames = sliding_window_view(xp, n)[::hop][:n_out]
        re_im = frames @ basis
        power[k] = (re_im**2).sum(axis=1)
    return FeatureMatrix("cqt", np.log(power + LOG_FLOOR), cfg.hash)


def fix_frames(fm: FeatureMatrix, n_frames: int = N_FRAMES) -> FeatureMatrix:
    """Keep the first ``n_frames`` columns, or tile the whole matrix up to that length."""
    T = fm.frames
    if T == 0:
        raise DataError("cannot fix the length of an empty feature matrix")
    if T >= n_frames:
        values = fm.values[:, :n_frames]
    else:
        values = np.tile(fm.values, (1, -(-n_frames // T)))[:, :n_frames]
    return FeatureMatrix(fm.kind, np.ascontiguousarray(values), fm.config_hash)


_FRONT_ENDS = {"spec": log_power_spectrogram, "lfcc": lfcc, "cqt": cqt}


def extract(clip: AudioClip, cfg: FeatureConfig) -> FeatureMatrix:
    """Front-end for ``cfg.kind`` followed by fix_frames; values stored as float32."""
    fm = fix_frames(_FRONT_ENDS[cfg.kind](clip, cfg), cfg.n_frames)
    fm.values = fm.values.astype(np.float32)
    return fm


# --------------------------------------------------------------------------
# audio I/O

def read_wav(path, utt_id: str = "") -> AudioClip:
    """Read a PCM16 mono RIFF/WAVE file into [-1, 1) floats."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise WavFormatError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a PCM RIFF/WAVE file ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if samples.size == 0:
        raise WavFormatError(f"{path}: no audio samples")
    return AudioClip(samples, rate, utt_id or Path(path).stem)


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


# --------------------------------------------------------------------------
# feature cache files
#
# header: b"R2NF" | u32 version | 8-byte kind (ASCII, NUL padded) | u32 F |
#         u32 T | 16-byte config hash (ASCII hex)
# body:   float32 little-endian, frame by frame (column-major F x T)

CACHE_MAGIC = b"R2NF"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sI8sII16s")


def write_feature(path, fm: FeatureMatrix) -> None:
    values = np.asarray(fm.values, dtype="<f4")
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, fm.kind.encode(), values.shape[0],
                          values.shape[1], fm.config_hash.encode().ljust(16, b"\0"))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(values.T).tobytes())
    tmp.replace(path)


def read_feature_header(path) -> tuple[str, int, int, str]:
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated feature file")
    magic, version, kind, F, T, h = _HEADER.unpack(raw)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise DataError(f"{path}: not a feature cache file (version {CACHE_VERSION})")
    return kind.rstrip(b"\0").decode(), F, T, h.rstrip(b"\0").decode()


def read_feature(path) -> FeatureMatrix:
    kind, F, T, h = read_feature_header(path)
    data = np.fromfile(path, dtype="<f4", offset=_HEADER.size)
    if data.size != F * T:
        raise DataError(f"{path}: expected {F * T} values, found {data.size}")
    return FeatureMatrix(kind, np.ascontiguousarray(data.reshape(T, F).T).astype(np.float32), h)
