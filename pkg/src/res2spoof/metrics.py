"""EER, normalized min t-DCF, score fusion, and the score/protocol text formats.

Scores are "higher = more bonafide". Operating points come from thresholds
at the midpoints between consecutive distinct scores plus -inf and +inf;
a bonafide trial is rejected when its score is below the threshold and a
spoof is accepted when its score is at or above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

LABELS = ("bonafide", "spoof")


@dataclass
class ScoreRecord:
    utt_id: str
    score: float
    label: str | None = None


@dataclass
class ProtocolEntry:
    utt_id: str
    label: str
    attack: str = "-"


@dataclass(frozen=True)
class TdcfCosts:
    """Weights of CM misses (C1) and CM false alarms (C2)."""

    c1: float = 1.0
    c2: float = 10.0

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise DataError(f"t-DCF coefficients must be positive, got C1={self.c1}, C2={self.c2}")


def split_scores(records) -> tuple[np.ndarray, np.ndarray]:
    bona = np.array([r.score for r in records if r.label == "bonafide"], dtype=np.float64)
    spoof = np.array([r.score for r in records if r.label == "spoof"], dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise DataError("metrics need at least one bonafide and one spoof trial")
    return bona, spoof


def operating_points(bona, spoof):
    """Thresholds with the miss (FRR) and false-alarm (FAR) rates at each."""
    bona = np.sort(np.asarray(bona, dtype=np.float64))
    spoof = np.sort(np.asarray(spoof, dtype=np.float64))
    if bona.size == 0 or spoof.size == 0:
        raise DataError("metrics need at least one bonafide and one spoof trial")
    levels = np.unique(np.concatenate([bona, spoof]))
    thr = np.concatenate([[-np.inf], (levels[:-1] + levels[1:]) / 2, [np.inf]])
    frr = np.searchsorted(bona, thr, side="left") / bona.size
    far = 1.0 - np.searchsorted(spoof, thr, side="left") / spoof.size
    return thr, frr, far


def eer_from_scores(bona, spoof) -> tuple[float, float]:
    thr, frr, far = operating_points(bona, spoof)
    d = far - frr
    k = int(np.argmax(d <= 0))  # d[0] = 1 and d[-1] = -1
    if d[k] == 0:
        return float(frr[k]), float(thr[k])
    a = d[k - 1] / (d[k - 1] - d[k])
    eer = frr[k - 1] + a * (frr[k] - frr[k - 1])
    lo, hi = thr[k - 1], thr[k]
    if np.isfinite(lo) and np.isfinite(hi):
        t = lo + a * (hi - lo)
    else:
        t = lo if np.isfinite(lo) else hi
    return float(eer), float(t)


def compute_eer(records) -> tuple[float, float]:
    """(EER in [0, 1], threshold at the FAR/FRR crossing) for labeled records."""
    return eer_from_scores(*split_scores(records))


def min_tdcf_from_scores(bona, spoof, costs: TdcfCosts = TdcfCosts()) -> float:
    _, frr, far = operating_points(bona, spoof)
    cost = costs.c1 * frr + costs.c2 * far
    return float(cost.min() / min(costs.c1, costs.c2))


def compute_min_tdcf(records, costs: TdcfCosts = TdcfCosts()) -> float:
    """min over thresholds of C1*Pmiss + C2*Pfa, normalized by min(C1, C2)."""
    return min_tdcf_from_scores(*split_scores(records), costs)


def fuse_scores(score_sets) -> list[ScoreRecord]:
    """Per-utterance mean over several score lists (first list's order)."""
    score_sets = [list(s) for s in score_sets]
    if not score_sets:
        raise DataError("nothing to fuse")
    tables = []
    for s in score_sets:
        table = {r.utt_id: r.score for r in s}
        if len(table) != len(s):
            raise DataError("duplicate utterance ids in a score list")
        tables.append(table)
    ref = set(tables[0])
    for t in tables[1:]:
        if set(t) != ref:
            diff = sorted(ref.symmetric_difference(t))
            raise DataError(f"score files cover different utterances: {' '.join(diff)}")
    n = len(tables)
    # fsum: exact rounding, so the mean does not depend on file order
    return [ScoreRecord(r.utt_id, math.fsum(t[r.utt_id] for t in tables) / n, r.label)
            for r in score_sets[0]]


def per_attack_eer(records) -> dict[str, float]:
    bona = np.array([r.score for r in records if r.label == "bonafide"])
    attacks: dict[str, list[float]] = {}
    for r in records:
        if r.label == "spoof":
            attacks.setdefault(getattr(r, "attack", "-"), []).append(r.score)
    return {a: eer_from_scores(bona, np.array(s))[0] for a, s in sorted(attacks.items())}


# --------------------------------------------------------------------------
# text formats

def format_score(x: float) -> str:
    return f"{x:.17g}"


def write_scores(path, records) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for r in records:
            f.write(f"{r.utt_id} {format_score(r.score)}\n")
    tmp.replace(path)


def read_scores(path) -> list[ScoreRecord]:
    records, seen = [], set()
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{n}: expected 'utt_id score'")
            try:
                score = float(parts[1])
            except ValueError:
                raise DataError(f"{path}:{n}: bad score {parts[1]!r}") from None
            if not math.isfinite(score):
                raise DataError(f"{path}:{n}: non-finite score")
            if parts[0] in seen:
                raise DataError(f"{path}:{n}: duplicate utterance id {parts[0]}")
            seen.add(parts[0])
            records.append(ScoreRecord(parts[0], score))
    return records


def parse_protocol_line(parts: list[str]) -> ProtocolEntry:
    """Accepts ``utt label [attack]``, a labeled manifest line
    ``utt path label [attack]``, or the five-column ASVspoof CM layout
    ``speaker utt - attack label``."""
    if len(parts) >= 5 and parts[-1] in LABELS:
        return ProtocolEntry(parts[1], parts[-1], parts[3])
    if len(parts) in (2, 3) and parts[1] in LABELS:
        return ProtocolEntry(parts[0], parts[1], parts[2] if len(parts) == 3 else "-")
    if len(parts) in (3, 4) and parts[2] in LABELS:
        return ProtocolEntry(parts[0], parts[2], parts[3] if len(parts) == 4 else "-")
    raise DataError(f"unrecognized protocol line: {' '.join(parts)!r}")


def read_protocol(path) -> list[ProtocolEntry]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                entries.append(parse_protocol_line(parts))
            except DataError as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
    return entries


@dataclass
class LabeledScore(ScoreRecord):
    attack: str = "-"


def attach_labels(scores, protocol) -> list[LabeledScore]:
    """Join scores with protocol labels; the id sets must match exactly."""
    table = {e.utt_id: e for e in protocol}
    ids = {r.utt_id for r in scores}
    if ids != set(table):
        diff = sorted(ids.symmetric_difference(table))
        raise DataError(f"score and protocol ids differ ({len(diff)}): {' '.join(diff[:20])}")
    return [LabeledScore(r.utt_id, r.score, table[r.utt_id].label, table[r.utt_id].attack) for r in scores]
