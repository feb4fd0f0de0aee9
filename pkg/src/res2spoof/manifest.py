"""Dataset manifests.

Two line layouts are accepted (whitespace separated, ``#`` comments):

* ``utt_id relative/path.wav [label [attack]]`` with paths relative to the
  audio root (the manifest's directory unless given);
* the five-column ASVspoof CM protocol ``speaker utt_id - attack label``;
  audio is then looked up as ``<root>/<utt_id>.wav``, ``<root>/wav/<utt_id>.wav``,
  ``<root>/flac/<utt_id>.flac`` or ``<root>/<utt_id>.flac``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .metrics import LABELS

_ASV_CANDIDATES = ("{u}.wav", "wav/{u}.wav", "flac/{u}.flac", "{u}.flac")


@dataclass
class ManifestEntry:
    utt_id: str
    path: Path
    label: str | None = None
    attack: str = "-"


def _parse(parts: list[str], root: Path) -> ManifestEntry:
    if len(parts) >= 5 and parts[-1] in LABELS:
        utt = parts[1]
        for pattern in _ASV_CANDIDATES:
            p = root / pattern.format(u=utt)
            if p.exists():
                break
        else:
            p = root / f"{utt}.wav"
        return ManifestEntry(utt, p, parts[-1], parts[3])
    if 2 <= len(parts) <= 4:
        label = parts[2] if len(parts) >= 3 else None
        if label is not None and label not in LABELS:
            raise DataError(f"label must be one of {LABELS}, got {label!r}")
        return ManifestEntry(parts[0], root / parts[1], label, parts[3] if len(parts) == 4 else "-")
    raise DataError(f"unrecognized manifest line: {' '.join(parts)!r}")


def read_manifest(path, root=None, check_files: bool = True) -> list[ManifestEntry]:
    path = Path(path)
    root = Path(root) if root is not None else path.parent
    entries, seen = [], set()
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                e = _parse(parts, root)
            except DataError as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
            if e.utt_id in seen:
                raise DataError(f"{path}:{n}: duplicate utterance id {e.utt_id}")
            seen.add(e.utt_id)
            entries.append(e)
    if check_files:
        missing = [e.utt_id for e in entries if not e.path.exists()]
        if missing:
            raise DataError(f"{path}: {len(missing)} audio files missing: {' '.join(missing[:20])}")
    return entries


def check_disjoint(*manifests: list[ManifestEntry]) -> None:
    seen: set[str] = set()
    for m in manifests:
        ids = {e.utt_id for e in m}
        overlap = seen & ids
        if overlap:
            raise DataError(f"partitions share utterances: {' '.join(sorted(overlap)[:20])}")
        seen |= ids
