"""Song complexity features: tempo, drum count, meter changes, nPVI, hit
entropy and polyphony."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Sequence

from .midi_ingest import DrumTrack, MidiSong, ticks_to_seconds
from .rhythm import RhythmicContactChain

FEATURE_COLUMNS = ("song", "n_drums", "entropy", "npvi", "bpm", "polyphony_pct", "time_sig_changes")


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (too few onsets, no hits...)."""


@dataclass(frozen=True)
class SongFeatures:
    bpm: float | None
    n_drums: int
    time_sig_changes: int | None
    npvi: float | None
    entropy: float | None
    polyphony_pct: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    def row(self, song: str) -> dict:
        doc = self.to_dict()
        doc["song"] = song
        return {k: doc[k] for k in FEATURE_COLUMNS}


def compute_bpm(song: MidiSong) -> float:
    """Tempo held for the longest total time, in BPM.

    Segments run from one tempo change to the next, the last one ending at the
    song's final event. Ties go to the tempo that appears first.
    """
    tmap = song.tempo_map()
    end = max(song.end_tick, tmap[-1][0])
    bounds = [t for t, _ in tmap] + [end]
    secs = ticks_to_seconds(bounds, tmap, song.ticks_per_quarter)
    held: dict[int, float] = defaultdict(float)
    first_seen: dict[int, int] = {}
    for i, (_, us) in enumerate(tmap):
        held[us] += secs[i + 1] - secs[i]
        first_seen.setdefault(us, i)
    if all(v == 0 for v in held.values()):
        us = tmap[0][1]  # zero-length song: tempo in force at tick 0
    else:
        us = max(held, key=lambda u: (held[u], -first_seen[u]))
    return 60e6 / us


def npvi_from_iois(iois: Sequence[float]) -> float:
    d = [float(x) for x in iois]
    if len(d) < 2:
        raise UndefinedMetricError("nPVI needs at least two inter-onset intervals")
    terms = [abs(a - b) / ((a + b) / 2) for a, b in zip(d, d[1:])]
    return 100.0 * sum(terms) / len(terms)


def compute_npvi(chain: RhythmicContactChain) -> float:
    if len(chain) < 3:
        raise UndefinedMetricError(f"nPVI needs >= 3 contact steps, chain has {len(chain)}")
    return npvi_from_iois(chain.iois())


def compute_entropy(track: DrumTrack) -> float:
    """Shannon entropy of per-drum hit counts, normalised by log2(#drums used)."""
    counts = Counter(d for drums in track.hits.values() for d in drums)
    total = sum(counts.values())
    if total == 0:
        raise UndefinedMetricError("entropy of an empty track")
    k = len(counts)
    if k == 1:
        return 0.0
    h = -sum(c / total * math.log2(c / total) for c in counts.values())
    return h / math.log2(k)


def count_time_sig_changes(song: MidiSong) -> int:
    sigs = [(num, den) for _, num, den in song.time_sig_events]
    return sum(1 for a, b in zip(sigs, sigs[1:]) if a != b)


def count_drums(track: DrumTrack) -> int:
    return len({d for drums in track.hits.values() for d in drums})


def compute_polyphony(track: DrumTrack) -> float:
    """Percent of hit-bearing frames that ask for three or more drums at once."""
    if not track.hits:
        raise UndefinedMetricError("polyphony of a track without hits")
    dense = sum(1 for drums in track.hits.values() if len(drums) >= 3)
    return 100.0 * dense / len(track.hits)


def _or_none(fn, arg):
    try:
        return fn(arg)
    except UndefinedMetricError:
        return None


def song_features(song: MidiSong | None, track: DrumTrack,
                  chain: RhythmicContactChain) -> SongFeatures:
    """All features for one song. Undefined metrics come back as None, as do
    tempo and meter changes when no MidiSong is available."""
    return SongFeatures(
        bpm=compute_bpm(song) if song is not None else None,
        n_drums=count_drums(track),
        time_sig_changes=count_time_sig_changes(song) if song is not None else None,
        npvi=_or_none(compute_npvi, chain),
        entropy=_or_none(compute_entropy, track),
        polyphony_pct=_or_none(compute_polyphony, track),
    )
