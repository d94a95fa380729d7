"""Score sets, ROC points, AUC and EER.

Convention: a sample is classified as morph when ``score >= threshold``.
FAR is the fraction of bona fide samples accepted as morph, FRR the
fraction of morphs scored below the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Tuple

import numpy as np

from deepmad.errors import MissingClass, ParseError

BONAFIDE = "bonafide"
MORPH = "morph"
LABELS = (BONAFIDE, MORPH)


class ScoreEntry(NamedTuple):
    sample_id: str
    label: str
    score: float


@dataclass(frozen=True)
class ScoreSet:
    entries: Tuple[ScoreEntry, ...]
    name: str = ""

    def __post_init__(self):
        entries = tuple(ScoreEntry(str(i), str(l), float(s)) for i, l, s in self.entries)
        seen = set()
        for e in entries:
            if e.label not in LABELS:
                raise ValueError(f"{e.sample_id}: unknown label {e.label!r}")
            if e.sample_id in seen:
                raise ValueError(f"duplicate sample id {e.sample_id!r}")
            if math.isnan(e.score):
                raise ValueError(f"{e.sample_id}: score is NaN")
            seen.add(e.sample_id)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_arrays(cls, bonafide, morph, name: str = "") -> "ScoreSet":
        entries = [(f"b{i}", BONAFIDE, s) for i, s in enumerate(bonafide)]
        entries += [(f"m{i}", MORPH, s) for i, s in enumerate(morph)]
        return cls(tuple(entries), name)

    def __len__(self):
        return len(self.entries)

    def scores(self, label: str) -> np.ndarray:
        return np.array([e.score for e in self.entries if e.label == label], dtype=np.float64)

    @property
    def bonafide(self) -> np.ndarray:
        return self.scores(BONAFIDE)

    @property
    def morph(self) -> np.ndarray:
        return self.scores(MORPH)

    def by_id(self) -> dict:
        return {e.sample_id: e for e in self.entries}

    def swapped(self) -> "ScoreSet":
        flip = {BONAFIDE: MORPH, MORPH: BONAFIDE}
        return ScoreSet(tuple(ScoreEntry(e.sample_id, flip[e.label], e.score) for e in self.entries), self.name)


def _split(s: ScoreSet) -> Tuple[np.ndarray, np.ndarray]:
    bona, morph = s.bonafide, s.morph
    if len(bona) == 0 or len(morph) == 0:
        raise MissingClass(f"score set {s.name!r} needs both classes ({len(bona)} bona fide, {len(morph)} morph)")
    return bona, morph


def auc(s: ScoreSet) -> float:
    """P(morph score > bona fide score), ties counting one half."""
    bona, morph = _split(s)
    bona = np.sort(bona)
    below = np.searchsorted(bona, morph, side="left")
    at_or_below = np.searchsorted(bona, morph, side="right")
    # twice the Mann-Whitney U, kept integral until the final division
    twice_u = int(np.sum(below + at_or_below))
    return twice_u / (2 * len(bona) * len(morph))


class RocPoint(NamedTuple):
    far: float
    frr: float
    threshold: float


def roc_points(s: ScoreSet) -> List[RocPoint]:
    """ROC polyline over -inf, every distinct score, +inf (ascending threshold).

    Consecutive thresholds with identical (FAR, FRR) collapse onto the lowest
    one, so the lowest score always merges into the -inf sentinel.
    """
    bona, morph = _split(s)
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([bona, morph])), [np.inf]])
    bona, morph = np.sort(bona), np.sort(morph)
    n_b, n_m = len(bona), len(morph)
    accepted_b = n_b - np.searchsorted(bona, thresholds, side="left")
    rejected_m = np.searchsorted(morph, thresholds, side="left")
    points: List[RocPoint] = []
    for t, ab, rm in zip(thresholds, accepted_b, rejected_m):
        far, frr = ab / n_b, rm / n_m
        if points and points[-1].far == far and points[-1].frr == frr:
            continue
        points.append(RocPoint(float(far), float(frr), float(t)))
    return points


def eer_from_points(points: List[RocPoint]) -> float:
    prev = points[0]
    if prev.far == prev.frr:
        return 100.0 * prev.far
    for cur in points[1:]:
        d_prev, d_cur = prev.far - prev.frr, cur.far - cur.frr
        if d_cur == 0.0:
            return 100.0 * cur.far
        if d_cur < 0.0:
            alpha = d_prev / (d_prev - d_cur)
            return 100.0 * (prev.far + alpha * (cur.far - prev.far))
        prev = cur
    raise AssertionError("ROC polyline never crosses FAR = FRR")


def eer(s: ScoreSet) -> float:
    """Equal error rate in percent, linearly interpolated on the ROC polyline."""
    return eer_from_points(roc_points(s))


# --- score files -----------------------------------------------------------

def parse_scores(lines: Iterable[str], name: str = "") -> ScoreSet:
    entries = []
    seen = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        sid, label, score = parts
        if label not in LABELS:
            raise ParseError(lineno, f"label must be 'bonafide' or 'morph', got {label!r}")
        if sid in seen:
            raise ParseError(lineno, f"duplicate sample id {sid!r}")
        try:
            value = float(score)
        except ValueError:
            raise ParseError(lineno, f"score {score!r} is not a number") from None
        if math.isnan(value):
            raise ParseError(lineno, "score is NaN")
        seen.add(sid)
        entries.append(ScoreEntry(sid, label, value))
    return ScoreSet(tuple(entries), name)


def read_scores(path) -> ScoreSet:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_scores(fh, name=path.stem)


def format_scores(s: ScoreSet) -> str:
    return "".join(f"{e.sample_id}\t{e.label}\t{format(e.score, '.17g')}\n" for e in s.entries)


def write_scores(s: ScoreSet, path) -> None:
    Path(path).write_text(format_scores(s), encoding="utf-8")
