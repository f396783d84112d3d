"""Rhythmic contact chains built from drum tracks, and their segmentation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .midi_ingest import N_DRUMS, DrumTrack

LEFT, RIGHT = "L", "R"
BOTH_STICKS = frozenset({LEFT, RIGHT})
DEFAULT_SEGMENT_STEPS = 32
DEFAULT_LOOKAHEAD = 20


@dataclass(frozen=True)
class ContactStep:
    drums: frozenset[int]
    time: float
    frame: int
    sticks: frozenset[str] = BOTH_STICKS

    def __post_init__(self):
        if not self.drums:
            raise ValueError("a contact step needs at least one drum")
        if not self.sticks or not self.sticks <= BOTH_STICKS:
            raise ValueError(f"invalid stick set {set(self.sticks)}")

    def to_dict(self) -> dict:
        return {"frame": self.frame, "time": self.time, "drums": sorted(self.drums),
                "sticks": sorted(self.sticks)}


@dataclass(frozen=True)
class RhythmicContactChain:
    steps: tuple[ContactStep, ...]
    fps: float
    song_id: str = ""

    def __post_init__(self):
        frames = [s.frame for s in self.steps]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("contact step frames must be strictly increasing")

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.steps], dtype=float)

    def iois(self) -> np.ndarray:
        # from integer frames so equal gaps compare equal
        return np.diff([s.frame for s in self.steps]) / self.fps

    def to_track(self, n_frames: int | None = None) -> DrumTrack:
        hits = {s.frame: s.drums for s in self.steps}
        if n_frames is None:
            n_frames = self.steps[-1].frame + 1 if self.steps else 0
        return DrumTrack(fps=self.fps, n_frames=n_frames, hits=hits)

    def to_dict(self, segments: list[Segment] | None = None) -> dict:
        doc = {"song_id": self.song_id, "fps": self.fps,
               "steps": [s.to_dict() for s in self.steps]}
        if segments is not None:
            doc["segments"] = [seg.to_dict() for seg in segments]
        return doc


@dataclass(frozen=True)
class Segment:
    chain_ref: str
    m: int
    start_step: int
    end_step: int
    frame_range: range = field(default=range(0))

    def __len__(self) -> int:
        return self.end_step - self.start_step

    def to_dict(self) -> dict:
        return {"m": self.m, "start_step": self.start_step, "end_step": self.end_step,
                "frame_start": self.frame_range.start, "frame_stop": self.frame_range.stop}


@dataclass(frozen=True)
class GoalWindow:
    rows: np.ndarray  # (L + 1, 6)
    t: int
    L: int

    def flat(self) -> np.ndarray:
        return self.rows.reshape(-1)


def build_chain(track: DrumTrack, song_id: str = "",
                sticks: dict[int, frozenset[str]] | None = None) -> RhythmicContactChain:
    """One contact step per non-empty frame.

    ``sticks`` optionally restricts the usable sticks per frame; unlisted frames
    allow both.
    """
    sticks = sticks or {}
    steps = tuple(
        ContactStep(drums=drums, time=frame / track.fps, frame=frame,
                    sticks=frozenset(sticks.get(frame, BOTH_STICKS)))
        for frame, drums in track.hits.items()
    )
    return RhythmicContactChain(steps=steps, fps=track.fps, song_id=song_id)


def decompose(chain: RhythmicContactChain, P: int = DEFAULT_SEGMENT_STEPS) -> list[Segment]:
    """Split the chain into ceil(N/P) consecutive segments; the last may be short."""
    if P < 1:
        raise ValueError(f"segment size must be >= 1, got {P}")
    n = len(chain)
    segments = []
    for m in range(1, math.ceil(n / P) + 1):
        lo, hi = (m - 1) * P, min(m * P, n)
        frames = range(chain[lo].frame, chain[hi - 1].frame + 1)
        segments.append(Segment(chain.song_id, m, lo, hi, frames))
    return segments


def sample_init(segment: Segment, rng: np.random.Generator) -> int:
    """Uniformly sample a contact-step index inside the segment."""
    if len(segment) <= 0:
        raise ValueError("cannot sample from an empty segment")
    return int(rng.integers(segment.start_step, segment.end_step))


def goal_window(track: DrumTrack, t: int, L: int = DEFAULT_LOOKAHEAD) -> GoalWindow:
    if t < 0 or L < 0:
        raise ValueError("t and L must be non-negative")
    rows = np.zeros((L + 1, N_DRUMS), dtype=np.int8)
    for i in range(L + 1):
        for d in track.drums_at(t + i):
            rows[i, d] = 1
    return GoalWindow(rows=rows, t=t, L=L)
