"""Event-matched precision/recall/F1, rank correlation and report data."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .complexity import SongFeatures
from .midi_ingest import DrumTrack
from .sim import StrikeEvent

DEFAULT_TOLERANCE = 1
CORRELATED_FEATURES = ("npvi", "n_drums", "polyphony_pct", "entropy", "bpm", "time_sig_changes")


class UndefinedCorrelationError(ValueError):
    pass


@dataclass
class Matching:
    pairs: list[tuple[int, StrikeEvent]]  # (target frame, strike)
    unmatched_targets: list[tuple[int, int]]  # (frame, drum)
    unmatched_strikes: list[StrikeEvent]
    tolerance: int


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class PerformanceScore(Counts):
    per_drum: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = super().to_dict()
        doc["per_drum"] = {str(d): c.to_dict() for d, c in sorted(self.per_drum.items())}
        return doc


def match_events(targets: DrumTrack, strikes: Iterable[StrikeEvent], tolerance: int = DEFAULT_TOLERANCE,
                 strike_fps: float | None = None) -> Matching:
    """Per drum, match each target (in time order) to the earliest unmatched
    strike within +-tolerance frames."""
    if strike_fps is not None and abs(strike_fps - targets.fps) > 1e-12:
        raise ValueError(f"fps mismatch: track {targets.fps}, strikes {strike_fps}")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    by_drum: dict[int, list[StrikeEvent]] = defaultdict(list)
    for s in strikes:
        by_drum[s.drum].append(s)
    target_frames: dict[int, list[int]] = defaultdict(list)
    for frame, drum in targets.hit_pairs():
        target_frames[drum].append(frame)

    pairs, missed, extra = [], [], []
    for drum in sorted(set(by_drum) | set(target_frames)):
        hits = sorted(by_drum[drum], key=lambda s: s.frame)
        j = 0
        for frame in target_frames[drum]:
            while j < len(hits) and hits[j].frame < frame - tolerance:
                extra.append(hits[j])
                j += 1
            if j < len(hits) and hits[j].frame <= frame + tolerance:
                pairs.append((frame, hits[j]))
                j += 1
            else:
                missed.append((frame, drum))
        extra.extend(hits[j:])
    return Matching(pairs, missed, extra, tolerance)


def score(matching: Matching) -> PerformanceScore:
    tp, fp, fn = defaultdict(int), defaultdict(int), defaultdict(int)
    for _, s in matching.pairs:
        tp[s.drum] += 1
    for s in matching.unmatched_strikes:
        fp[s.drum] += 1
    for _, d in matching.unmatched_targets:
        fn[d] += 1
    drums = sorted(set(tp) | set(fp) | set(fn))
    per_drum = {d: Counts(tp[d], fp[d], fn[d]) for d in drums}
    return PerformanceScore(sum(tp.values()), sum(fp.values()), sum(fn.values()), per_drum)


def evaluate(track: DrumTrack, strikes: Sequence[StrikeEvent],
             tolerance: int = DEFAULT_TOLERANCE) -> PerformanceScore:
    return score(match_events(track, strikes, tolerance))


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError("spearman needs equal-length inputs")
    if len(xs) < 2:
        raise UndefinedCorrelationError("spearman needs at least two pairs")
    rx, ry = average_ranks(xs), average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0:
        raise UndefinedCorrelationError("a ranked input has zero variance")
    return max(-1.0, min(1.0, float(rx @ ry) / den))


@dataclass(frozen=True)
class CorrelationRow:
    feature: str
    rho: float | None
    n: int

    @property
    def abs_rho(self) -> float | None:
        return None if self.rho is None else abs(self.rho)


def feature_correlations(features: Sequence[SongFeatures],
                         scores: Sequence[PerformanceScore | float]) -> dict[str, CorrelationRow]:
    """Spearman rho of each song feature against F1, skipping absent values pairwise."""
    if len(features) != len(scores):
        raise ValueError("features and scores must be aligned")
    f1 = [s if isinstance(s, (int, float)) else s.f1 for s in scores]
    out = {}
    for name in CORRELATED_FEATURES:
        pairs = [(getattr(f, name), y) for f, y in zip(features, f1) if getattr(f, name) is not None]
        try:
            rho = spearman([p[0] for p in pairs], [p[1] for p in pairs])
        except UndefinedCorrelationError:
            rho = None
        out[name] = CorrelationRow(name, rho, len(pairs))
    return out


def aligned_hit_log(track: DrumTrack, strikes: Iterable[StrikeEvent]) -> list[dict]:
    """Frame-by-frame targets next to executed strikes, for plotting."""
    executed: dict[int, set[int]] = defaultdict(set)
    for s in strikes:
        executed[s.frame].add(s.drum)
    frames = sorted(set(track.hits) | set(executed))
    return [{"frame": f, "targets": sorted(track.drums_at(f)), "strikes": sorted(executed.get(f, ()))}
            for f in frames]


def f1_upper_bound(max_drums_per_step: int, drums_per_step: int) -> float:
    """F1 ceiling when every step asks for ``drums_per_step`` drums but at most
    ``max_drums_per_step`` can be played (perfect precision assumed)."""
    r = min(1.0, max_drums_per_step / drums_per_step)
    return 2 * r / (1 + r)
