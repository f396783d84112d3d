"""Standard MIDI File reading and drum-track extraction.

The pipeline is::

    song = parse_smf(data)
    events = extract_drum_events(song)
    events = collapse_articulations(events, mapping)
    track = quantize_to_track(events, mapping, fps=50)

Only note-on/note-off, tempo and time-signature information survives parsing;
everything else in the file is skipped.
"""
from __future__ import annotations

import json
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

PERCUSSION_CHANNEL = 9
DEFAULT_TEMPO = 500_000  # microseconds per quarter note
DEFAULT_FPS = 50
N_DRUMS = 6
DRUM_NAMES = ("hi-hat", "snare", "tom 1", "tom 2", "cymbal 1", "cymbal 2")
HIHAT, SNARE, TOM1, TOM2, CYMBAL1, CYMBAL2 = range(N_DRUMS)

SCHEMA_VERSION = 1


class MidiParseError(ValueError):
    """Malformed SMF data. ``offset`` is the byte position where reading failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(MidiParseError):
    pass


@dataclass(frozen=True)
class MidiEvent:
    tick: int
    kind: str  # "note_on" | "note_off"
    channel: int
    note: int
    velocity: int


@dataclass
class MidiSong:
    ticks_per_quarter: int
    events: list[MidiEvent] = field(default_factory=list)
    tempo_events: list[tuple[int, int]] = field(default_factory=list)
    time_sig_events: list[tuple[int, int, int]] = field(default_factory=list)
    format: int = 1

    def __post_init__(self):
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")
        if any(us <= 0 for _, us in self.tempo_events):
            raise ValueError("tempo values must be positive")
        ticks = [e.tick for e in self.events]
        if any(b < a for a, b in zip(ticks, ticks[1:])):
            raise ValueError("event ticks must be non-decreasing")

    @property
    def end_tick(self) -> int:
        candidates = [e.tick for e in self.events]
        candidates += [t for t, _ in self.tempo_events]
        candidates += [t for t, _, _ in self.time_sig_events]
        return max(candidates, default=0)

    def tempo_map(self) -> list[tuple[int, int]]:
        """Sorted (tick, us_per_quarter) breakpoints, always starting at tick 0.

        When several tempo events share a tick the last one wins.
        """
        by_tick: dict[int, int] = {0: DEFAULT_TEMPO}
        for tick, us in sorted(self.tempo_events, key=lambda x: x[0]):
            by_tick[tick] = us
        return sorted(by_tick.items())

    def tick_to_seconds(self, tick: int) -> float:
        return ticks_to_seconds([tick], self.tempo_map(), self.ticks_per_quarter)[0]


@dataclass(frozen=True)
class NoteOnEvent:
    note: int
    velocity: int
    onset: float

    def __post_init__(self):
        if not math.isfinite(self.onset):
            raise ValueError("onset must be finite")
        if not 1 <= self.velocity <= 127:
            raise ValueError("note-on velocity must be in 1..127")


@dataclass(frozen=True)
class DrumMapping:
    note_to_drum: Mapping[int, int]

    def __post_init__(self):
        if not self.note_to_drum:
            raise ValueError("mapping must map at least one note")
        for note, drum in self.note_to_drum.items():
            if not 0 <= note <= 127:
                raise ValueError(f"MIDI note {note} out of range")
            if not 0 <= drum < N_DRUMS:
                raise ValueError(f"drum id {drum} out of range")

    def drum_of(self, note: int) -> int | None:
        return self.note_to_drum.get(note)

    @classmethod
    def general_midi(cls) -> "DrumMapping":
        return cls(dict(GM_DEFAULT_MAPPING))

    @classmethod
    def from_names(cls, table: Mapping[str | int, str]) -> "DrumMapping":
        mapping = {}
        for note, name in table.items():
            if name not in DRUM_NAMES:
                raise ValueError(f"unknown drum name {name!r}; expected one of {DRUM_NAMES}")
            mapping[int(note)] = DRUM_NAMES.index(name)
        return cls(mapping)


GM_DEFAULT_MAPPING = {
    38: SNARE, 40: SNARE,
    42: HIHAT, 44: HIHAT, 46: HIHAT,
    48: TOM1, 50: TOM1,
    45: TOM2, 47: TOM2,
    49: CYMBAL1, 55: CYMBAL1,
    51: CYMBAL2, 57: CYMBAL2, 59: CYMBAL2,
}


def load_mapping(path: str | Path) -> DrumMapping:
    """Read a ``[mapping]`` table of ``note = "drum name"`` entries from TOML."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    if "mapping" not in doc:
        raise ValueError(f"{path}: missing [mapping] table")
    return DrumMapping.from_names(doc["mapping"])


@dataclass(frozen=True)
class DrumTrack:
    """Sparse time-indexed drum grid: frame index -> set of drum ids."""

    fps: float = DEFAULT_FPS
    n_frames: int = 0
    hits: Mapping[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.n_frames < 0:
            raise ValueError("n_frames must be >= 0")
        clean = {}
        for frame, drums in self.hits.items():
            drums = frozenset(drums)
            if not drums:
                raise ValueError(f"empty hit set at frame {frame}")
            if not 0 <= frame < self.n_frames:
                raise ValueError(f"frame {frame} outside [0, {self.n_frames})")
            if any(not 0 <= d < N_DRUMS for d in drums):
                raise ValueError(f"drum id out of range at frame {frame}")
            clean[int(frame)] = drums
        object.__setattr__(self, "hits", dict(sorted(clean.items())))

    @property
    def n_hits(self) -> int:
        return sum(len(d) for d in self.hits.values())

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps

    def frames(self) -> list[int]:
        return list(self.hits)

    def drums_at(self, frame: int) -> frozenset[int]:
        return self.hits.get(frame, frozenset())

    def one_hot(self, frame: int) -> list[int]:
        drums = self.drums_at(frame)
        return [1 if d in drums else 0 for d in range(N_DRUMS)]

    def hit_pairs(self) -> list[tuple[int, int]]:
        """All (frame, drum) pairs in frame then drum order."""
        return [(f, d) for f, drums in self.hits.items() for d in sorted(drums)]

    def to_dict(self) -> dict:
        fps = int(self.fps) if float(self.fps).is_integer() else self.fps
        return {
            "schema_version": SCHEMA_VERSION,
            "fps": fps,
            "n_frames": self.n_frames,
            "frames": [[f, sorted(d)] for f, d in self.hits.items()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DrumTrack":
        hits = {int(f): frozenset(int(d) for d in drums) for f, drums in doc["frames"]}
        return cls(fps=doc["fps"], n_frames=int(doc["n_frames"]), hits=hits)

    @classmethod
    def from_json(cls, text: str) -> "DrumTrack":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# SMF reading


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise MidiParseError(f"unexpected end of data reading {n} byte(s)", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def varlen(self) -> int:
        start = self.pos
        value = 0
        for _ in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MidiParseError("variable-length quantity longer than 4 bytes", start)


_DATA_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def parse_smf(data: bytes) -> MidiSong:
    """Parse a format 0 or 1 Standard MIDI File into one merged event stream."""
    data = bytes(data)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiParseError("missing MThd header chunk", 0)
    (hdr_len,) = struct.unpack(">I", data[4:8])
    if hdr_len < 6 or 8 + hdr_len > len(data):
        raise MidiParseError(f"bad header chunk length {hdr_len}", 4)
    fmt, ntrks, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise UnsupportedFormatError("SMF format 2 is not supported", 8)
    if fmt not in (0, 1):
        raise MidiParseError(f"unknown SMF format {fmt}", 8)
    if division & 0x8000:
        raise UnsupportedFormatError("SMPTE time division is not supported", 12)
    if division == 0:
        raise MidiParseError("ticks per quarter note is zero", 12)

    pos = 8 + hdr_len
    tracks: list[list[tuple]] = []
    while pos < len(data):
        if pos + 8 > len(data):
            raise MidiParseError("truncated chunk header", pos)
        chunk_type = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + length > len(data):
            raise MidiParseError(
                f"chunk {chunk_type!r} declares {length} bytes, only {len(data) - body} remain", pos + 4
            )
        if chunk_type == b"MTrk":
            tracks.append(_parse_track(data, body, body + length))
        pos = body + length
    if len(tracks) < ntrks:
        raise MidiParseError(f"header declares {ntrks} tracks, found {len(tracks)}", pos)

    notes, tempos, sigs = [], [], []
    for track_idx, items in enumerate(tracks):
        for seq, item in enumerate(items):
            tick = item[1]
            if item[0] == "note":
                notes.append((tick, track_idx, seq, item[2]))
            elif item[0] == "tempo":
                tempos.append((tick, track_idx, seq, item[2]))
            else:
                sigs.append((tick, track_idx, seq, item[2]))
    notes.sort(key=lambda x: x[:3])
    tempos.sort(key=lambda x: x[:3])
    sigs.sort(key=lambda x: x[:3])
    return MidiSong(
        ticks_per_quarter=division,
        events=[n[3] for n in notes],
        tempo_events=[(t[0], t[3]) for t in tempos],
        time_sig_events=[(s[0], *s[3]) for s in sigs],
        format=fmt,
    )


def _parse_track(data: bytes, start: int, end: int) -> list[tuple]:
    r = _Reader(data, start, end)
    tick = 0
    status = None
    out = []
    while r.pos < r.end:
        tick += r.varlen()
        at = r.pos
        byte = r.u8()
        if byte == 0xFF:
            meta_type = r.u8()
            body = r.take(r.varlen())
            if meta_type == 0x51:
                if len(body) != 3:
                    raise MidiParseError("tempo meta event must carry 3 bytes", at)
                us = int.from_bytes(body, "big")
                if us == 0:
                    raise MidiParseError("tempo of zero microseconds per quarter", at)
                out.append(("tempo", tick, us))
            elif meta_type == 0x58:
                if len(body) < 2:
                    raise MidiParseError("time signature meta event too short", at)
                out.append(("timesig", tick, (body[0], 2 ** body[1])))
            elif meta_type == 0x2F:
                break
            continue
        if byte in (0xF0, 0xF7):
            r.take(r.varlen())
            continue
        if byte >= 0xF0:
            raise MidiParseError(f"unexpected system message 0x{byte:02X} in track", at)
        if byte & 0x80:
            status = byte
            first = r.u8()
        else:
            if status is None:
                raise MidiParseError("running status without a preceding status byte", at)
            first = byte
        kind = status & 0xF0
        second = r.u8() if _DATA_LEN[kind] == 2 else None
        if kind in (0x80, 0x90):
            if first > 127 or second > 127:
                raise MidiParseError("note data byte out of range", at)
            on = kind == 0x90 and second > 0
            out.append(("note", tick, MidiEvent(tick, "note_on" if on else "note_off",
                                                status & 0x0F, first, second)))
    return out


def write_smf(song: MidiSong) -> bytes:
    """Serialise a MidiSong as a format 0 SMF (one track, explicit status bytes)."""
    items = []
    for tick, us in song.tempo_events:
        items.append((tick, 0, b"\xFF\x51\x03" + us.to_bytes(3, "big")))
    for tick, num, den in song.time_sig_events:
        items.append((tick, 0, bytes([0xFF, 0x58, 0x04, num, int(math.log2(den)), 24, 8])))
    for ev in song.events:
        status = (0x90 if ev.kind == "note_on" else 0x80) | ev.channel
        items.append((ev.tick, 1, bytes([status, ev.note, ev.velocity])))
    items.sort(key=lambda x: (x[0], x[1]))
    body = bytearray()
    last = 0
    for tick, _, payload in items:
        body += _varlen_bytes(tick - last) + payload
        last = tick
    body += b"\x00\xFF\x2F\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, song.ticks_per_quarter)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def _varlen_bytes(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


# ---------------------------------------------------------------------------
# drum extraction


def ticks_to_seconds(ticks: Sequence[int], tempo_map: Sequence[tuple[int, int]],
                     ticks_per_quarter: int) -> list[float]:
    """Integrate a piecewise-constant tempo map at each tick."""
    starts = [0.0]
    for (t0, us0), (t1, _) in zip(tempo_map, tempo_map[1:]):
        starts.append(starts[-1] + (t1 - t0) * us0 / (ticks_per_quarter * 1e6))
    seg = 0
    order = sorted(range(len(ticks)), key=lambda i: ticks[i])
    result = [0.0] * len(ticks)
    for i in order:
        tick = ticks[i]
        while seg + 1 < len(tempo_map) and tempo_map[seg + 1][0] <= tick:
            seg += 1
        t0, us = tempo_map[seg]
        result[i] = starts[seg] + (tick - t0) * us / (ticks_per_quarter * 1e6)
    return result


def extract_drum_events(song: MidiSong, channel: int = PERCUSSION_CHANNEL) -> list[NoteOnEvent]:
    ons = [e for e in song.events if e.kind == "note_on" and e.channel == channel and e.velocity > 0]
    times = ticks_to_seconds([e.tick for e in ons], song.tempo_map(), song.ticks_per_quarter)
    events = [NoteOnEvent(e.note, e.velocity, t) for e, t in zip(ons, times)]
    events.sort(key=lambda e: e.onset)
    return events


def collapse_articulations(events: Iterable[NoteOnEvent], mapping: DrumMapping,
                           remap: bool = False) -> list[NoteOnEvent]:
    """Keep one articulation (MIDI note) per drum: the most frequent one.

    Ties go to the lower note number. Unmapped notes are dropped. With
    ``remap=True`` minority articulations are relabelled to the winning note
    instead of being discarded.
    """
    mapped = [e for e in events if mapping.drum_of(e.note) is not None]
    counts = Counter(e.note for e in mapped)
    winner: dict[int, int] = {}
    for note, n in sorted(counts.items()):
        drum = mapping.drum_of(note)
        best = winner.get(drum)
        if best is None or n > counts[best]:
            winner[drum] = note
    keep = set(winner.values())
    if not remap:
        return [e for e in mapped if e.note in keep]
    return [e if e.note in keep else NoteOnEvent(winner[mapping.drum_of(e.note)], e.velocity, e.onset)
            for e in mapped]


def frame_of(onset: float, fps: float) -> int:
    # round half up; python's round() is half-to-even
    return int(math.floor(onset * fps + 0.5))


def quantize_to_track(events: Iterable[NoteOnEvent], mapping: DrumMapping,
                      fps: float = DEFAULT_FPS) -> DrumTrack:
    if fps <= 0:
        raise ValueError("fps must be positive")
    hits: dict[int, set[int]] = {}
    for e in events:
        if e.onset < 0:
            raise ValueError(f"negative onset {e.onset}")
        drum = mapping.drum_of(e.note)
        if drum is None:
            continue
        hits.setdefault(frame_of(e.onset, fps), set()).add(drum)
    n_frames = max(hits) + 1 if hits else 0
    return DrumTrack(fps=fps, n_frames=n_frames, hits={f: frozenset(d) for f, d in hits.items()})


def ingest(data: bytes, mapping: DrumMapping | None = None, fps: float = DEFAULT_FPS,
           remap: bool = False) -> tuple[MidiSong, DrumTrack]:
    """Bytes to (song, track) in one call."""
    mapping = mapping or DrumMapping.general_midi()
    song = parse_smf(data)
    events = collapse_articulations(extract_drum_events(song), mapping, remap=remap)
    return song, quantize_to_track(events, mapping, fps)
