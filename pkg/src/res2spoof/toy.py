"""Seeded synthetic corpus: harmonic tones are "bonafide", band-filtered noise is "spoof".

Lets the full extract -> train -> score -> evaluate pipeline run without
external data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from .features import SAMPLE_RATE, AudioClip, write_wav

SPLITS = {"train": 64, "dev": 16, "eval": 32}


def tone(rng: np.random.Generator, n: int, sr: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = rng.uniform(120.0, 400.0)
    x = np.zeros(n)
    for h in range(1, rng.integers(2, 5) + 1):
        x += rng.uniform(0.3, 1.0) / h * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
    x += 0.01 * rng.standard_normal(n)
    return 0.5 * x / np.max(np.abs(x))


def filtered_noise(rng: np.random.Generator, n: int, sr: int = SAMPLE_RATE) -> tuple[np.ndarray, str]:
    lo = rng.uniform(200.0, 3000.0)
    hi = min(lo * rng.uniform(1.5, 3.0), 0.45 * sr)
    sos = butter(4, [lo, hi], btype="bandpass", fs=sr, output="sos")
    x = sosfilt(sos, rng.standard_normal(n))
    attack = "N1" if lo < 1000 else "N2"
    return 0.5 * x / np.max(np.abs(x)), attack


def toy_clips(split: str, count: int, seed: int = 0, duration: float = 1.0):
    """Yield (clip, label, attack) with classes alternating, bonafide first."""
    rng = np.random.default_rng([seed, list(SPLITS).index(split) if split in SPLITS else 99])
    n = int(round(duration * SAMPLE_RATE))
    for i in range(count):
        uid = f"TOY_{split[0].upper()}_{i:04d}"
        if i % 2 == 0:
            yield AudioClip(tone(rng, n), SAMPLE_RATE, uid), "bonafide", "-"
        else:
            x, attack = filtered_noise(rng, n)
            yield AudioClip(x, SAMPLE_RATE, uid), "spoof", attack


def make_toy_corpus(out_dir, seed: int = 0, splits: dict | None = None, duration: float = 1.0) -> dict[str, Path]:
    """Write WAVs plus one manifest per split (``<split>.lst``); returns manifest paths."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    manifests = {}
    for split, count in (splits or SPLITS).items():
        lines = []
        for clip, label, attack in toy_clips(split, count, seed, duration):
            write_wav(out / "wav" / f"{clip.id}.wav", clip.samples)
            lines.append(f"{clip.id} wav/{clip.id}.wav {label} {attack}\n")
        path = out / f"{split}.lst"
        path.write_text("".join(lines))
        manifests[split] = path
    return manifests
