"""Synthetic drum songs for demos, fixtures and trend sweeps.

Songs are built as MidiSong objects on the percussion channel and pushed
through the normal ingestion path, so generated tracks carry the same
quantisation effects as real files.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .midi_ingest import (CYMBAL1, CYMBAL2, HIHAT, PERCUSSION_CHANNEL, SNARE, TOM1, TOM2, DrumMapping,
                          DrumTrack, MidiEvent, MidiSong, collapse_articulations, extract_drum_events,
                          quantize_to_track)

TPQ = 480
# one representative General MIDI note per kit drum
DRUM_NOTES = {HIHAT: 42, SNARE: 38, TOM1: 48, TOM2: 45, CYMBAL1: 49, CYMBAL2: 51}
# drums added in this order as a song's drum count grows
DRUM_ORDER = (HIHAT, SNARE, TOM1, TOM2, CYMBAL1, CYMBAL2)
# relative usage when a drum is in play: hi-hat and snare carry the groove
DRUM_WEIGHTS = (4.0, 3.0, 1.0, 1.0, 1.0, 1.0)

# inter-onset patterns in 32nd notes, one 4/4 bar of eight onsets each, ordered
# by irregularity at equal density
RHYTHM_LEVELS = (
    (4, 4, 4, 4, 4, 4, 4, 4),
    (5, 3, 4, 4, 5, 3, 4, 4),
    (6, 2, 4, 4, 6, 2, 4, 4),
    (6, 2, 6, 2, 2, 6, 2, 6),
)


@dataclass(frozen=True)
class GeneratedSong:
    song_id: str
    song: MidiSong
    track: DrumTrack


def song_from_steps(steps: Sequence[tuple[int, Sequence[int]]], bpm: float, tpq: int = TPQ,
                    time_sigs: Sequence[tuple[int, int, int]] = ((0, 4, 4),)) -> MidiSong:
    """Build a MidiSong from (tick, drums) steps; drums are kit ids."""
    events = []
    for tick, drums in steps:
        for d in sorted(drums):
            events.append(MidiEvent(tick, "note_on", PERCUSSION_CHANNEL, DRUM_NOTES[d], 100))
            events.append(MidiEvent(tick + tpq // 8, "note_off", PERCUSSION_CHANNEL, DRUM_NOTES[d], 0))
    events.sort(key=lambda e: (e.tick, e.kind == "note_on"))
    return MidiSong(ticks_per_quarter=tpq, events=events,
                    tempo_events=[(0, int(round(60e6 / bpm)))], time_sig_events=list(time_sigs))


def to_track(song: MidiSong, fps: float = 50) -> DrumTrack:
    mapping = DrumMapping.general_midi()
    return quantize_to_track(collapse_articulations(extract_drum_events(song), mapping), mapping, fps)


def isochronous(n_drums: int = 2, bpm: float = 120, seconds: float = 60, per_beat: int = 1,
                lead_in_beats: int = 1, fps: float = 50) -> GeneratedSong:
    """Evenly spaced single hits cycling through the first ``n_drums`` drums."""
    drums = DRUM_ORDER[:n_drums]
    step = TPQ // per_beat
    n = int(seconds * bpm / 60 * per_beat)
    steps = [((lead_in_beats * TPQ) + i * step, [drums[i % n_drums]]) for i in range(n)]
    song = song_from_steps(steps, bpm)
    return GeneratedSong(f"iso_{n_drums}d_{bpm:g}bpm", song, to_track(song, fps))


def patterned(level: int, n_drums: int, bpm: float, bars: int = 16, seed: int = 0,
              fps: float = 50) -> GeneratedSong:
    """Repeat one bar of RHYTHM_LEVELS[level]; each onset gets a random drum
    from the first ``n_drums``, drawn with DRUM_WEIGHTS (every drum used at
    least once)."""
    rng = np.random.default_rng(seed)
    pattern = RHYTHM_LEVELS[level]
    unit = TPQ // 8
    ticks = []
    t = TPQ
    for _ in range(bars):
        for dur in pattern:
            ticks.append(t)
            t += dur * unit
    pool = DRUM_ORDER[:n_drums]
    weights = np.array(DRUM_WEIGHTS[:n_drums]) / sum(DRUM_WEIGHTS[:n_drums])
    drums = list(pool) + list(rng.choice(pool, size=len(ticks) - n_drums, p=weights))
    rng.shuffle(drums)
    song = song_from_steps([(tk, [int(d)]) for tk, d in zip(ticks, drums)], bpm)
    return GeneratedSong(f"lvl{level}_{n_drums}d_{bpm:g}bpm_s{seed}", song, to_track(song, fps))


def sweep_suite(levels: Sequence[int] = (0, 1, 2, 3), drum_counts: Sequence[int] = (2, 4, 6),
                tempos: Sequence[float] = (110, 120), bars: int = 16, seed: int = 0,
                fps: float = 50) -> list[GeneratedSong]:
    """Full factorial over rhythm irregularity, drum count and tempo.

    Songs with the same drum count share one drum sequence, so across rhythm
    levels and tempi only the timing changes.
    """
    return [patterned(level, n, bpm, bars=bars, seed=seed + n, fps=fps)
            for level in levels for n in drum_counts for bpm in tempos]


def polyphonic(drums_per_step: int = 3, bpm: float = 90, beats: int = 32,
               fps: float = 50) -> GeneratedSong:
    """Every beat asks for ``drums_per_step`` drums at once."""
    steps = [(TPQ + i * TPQ, DRUM_ORDER[(i % 2):(i % 2) + drums_per_step]) for i in range(beats)]
    song = song_from_steps(steps, bpm)
    return GeneratedSong(f"poly{drums_per_step}_{bpm:g}bpm", song, to_track(song, fps))
