"""Two-stick drumming simulator.

Each stick tip is a unit-mass point in 3-D driven by a PD law towards a target
configuration ``q_d = beta * a + q0``. The configuration vector is
``[left_x, left_y, left_z, right_x, right_y, right_z]`` (metres; x forward,
z up). A strike registers when a tip passes down through a drum's top plane
inside its radius fast enough.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .midi_ingest import DRUM_NAMES, N_DRUMS, DrumTrack
from .reward import RewardBreakdown, RewardWeights, StepContactState, contact_reward, \
    regularization_terms, total_reward
from .rhythm import DEFAULT_LOOKAHEAD, LEFT, RIGHT, Segment, build_chain, goal_window, sample_init

STICKS = (LEFT, RIGHT)
NEVER = -(10 ** 9)


class SimulationFault(RuntimeError):
    pass


@dataclass(frozen=True)
class Drum:
    id: int
    name: str
    center: tuple[float, float, float]
    radius: float
    surface: float | None = None  # top-plane height; defaults to center z

    @property
    def top(self) -> float:
        return self.center[2] if self.surface is None else self.surface


@dataclass(frozen=True)
class DrumKitLayout:
    drums: tuple[Drum, ...]

    def __post_init__(self):
        if len(self.drums) != N_DRUMS or [d.id for d in self.drums] != list(range(N_DRUMS)):
            raise ValueError("a kit has exactly six drums with ids 0..5 in order")
        for d in self.drums:
            if d.radius <= 0:
                raise ValueError(f"{d.name}: radius must be positive")
        for i, a in enumerate(self.drums):
            for b in self.drums[i + 1:]:
                gap = math.dist(a.center[:2], b.center[:2])
                if gap < a.radius + b.radius:
                    raise ValueError(f"footprints of {a.name} and {b.name} overlap")

    @property
    def centers(self) -> np.ndarray:
        return np.array([d.center for d in self.drums], dtype=float)

    def top_center(self, drum: int) -> np.ndarray:
        d = self.drums[drum]
        return np.array([d.center[0], d.center[1], d.top])

    @classmethod
    def default(cls) -> "DrumKitLayout":
        return cls(tuple(Drum(i, DRUM_NAMES[i], c, r) for i, (c, r) in enumerate(DEFAULT_KIT)))

    @classmethod
    def from_mapping(cls, table: Mapping) -> "DrumKitLayout":
        """Override default drums from a ``{drum name: {center, radius, surface}}`` table."""
        drums = list(cls.default().drums)
        for name, spec in table.items():
            if name not in DRUM_NAMES:
                raise ValueError(f"unknown drum {name!r}")
            i = DRUM_NAMES.index(name)
            drums[i] = replace(drums[i], center=tuple(float(v) for v in spec.get("center", drums[i].center)),
                               radius=float(spec.get("radius", drums[i].radius)),
                               surface=spec.get("surface", drums[i].surface))
        return cls(tuple(drums))


# hi-hat, snare, tom 1, tom 2, cymbal 1, cymbal 2
DEFAULT_KIT = (
    ((0.35, 0.30, 0.75), 0.13),
    ((0.35, 0.02, 0.70), 0.14),
    ((0.62, 0.16, 0.80), 0.11),
    ((0.62, -0.10, 0.80), 0.12),
    ((0.55, 0.52, 0.95), 0.16),
    ((0.55, -0.40, 0.95), 0.16),
)


def default_q0(kit: DrumKitLayout, height: float = 0.15) -> np.ndarray:
    """Left tip above the hi-hat, right tip above the snare."""
    left = kit.top_center(0) + [0, 0, height]
    right = kit.top_center(1) + [0, 0, height]
    return np.concatenate([left, right])


@dataclass(frozen=True, eq=False)
class SimConfig:
    n: int = 6
    kp: np.ndarray | float = 100.0
    kd: np.ndarray | float = 20.0
    beta: float = 0.5
    q0: np.ndarray | None = None
    sim_dt: float = 1 / 200
    control_fps: float = 50
    v_strike_min: float = 0.2
    refractory: int = 2
    lower: np.ndarray | float = (0.0, -0.8, 0.3) * 2
    upper: np.ndarray | float = (1.0, 0.8, 1.4) * 2
    tail_padding: int = 10
    lookahead: int = DEFAULT_LOOKAHEAD

    def __post_init__(self):
        for name in ("kp", "kd", "lower", "upper"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (self.n,)).copy()
            object.__setattr__(self, name, arr)
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("PD gains must be non-negative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.sim_dt <= 0 or self.control_fps <= 0:
            raise ValueError("sim_dt and control_fps must be positive")
        ratio = 1.0 / (self.control_fps * self.sim_dt)
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("sim_dt must divide the control period exactly")
        if np.any(self.lower >= self.upper):
            raise ValueError("workspace lower bounds must be below upper bounds")
        if self.q0 is not None:
            object.__setattr__(self, "q0", np.asarray(self.q0, dtype=float))
            if self.q0.shape != (self.n,):
                raise ValueError(f"q0 must have {self.n} entries")

    @property
    def substeps(self) -> int:
        return int(round(1.0 / (self.control_fps * self.sim_dt)))

    def home(self, kit: DrumKitLayout) -> np.ndarray:
        return self.q0 if self.q0 is not None else default_q0(kit)

    @classmethod
    def from_mapping(cls, table: Mapping) -> "SimConfig":
        return cls(**{k: (np.asarray(v) if isinstance(v, list) else v) for k, v in table.items()})


@dataclass
class SimState:
    q: np.ndarray
    qd: np.ndarray
    a_prev: np.ndarray
    t_frame: int = 0
    last_strike_frame: np.ndarray = field(default_factory=lambda: np.full(N_DRUMS, NEVER))

    def copy(self) -> "SimState":
        return SimState(self.q.copy(), self.qd.copy(), self.a_prev.copy(), self.t_frame,
                        self.last_strike_frame.copy())


@dataclass(frozen=True)
class Observation:
    proprio: np.ndarray
    spatial: np.ndarray
    goals: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.proprio, self.spatial, self.goals.astype(float)])

    @property
    def widths(self) -> tuple[int, int, int]:
        return len(self.proprio), len(self.spatial), len(self.goals)


@dataclass(frozen=True)
class StrikeEvent:
    frame: int
    drum: int
    stick: str
    impact_speed: float

    def to_dict(self) -> dict:
        return {"frame": self.frame, "drum": self.drum, "stick": self.stick,
                "impact_speed": self.impact_speed}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "StrikeEvent":
        return cls(int(doc["frame"]), int(doc["drum"]), str(doc.get("stick", LEFT)),
                   float(doc.get("impact_speed", 0.0)))


def pd_control(q_d, q, qd, kp, kd) -> np.ndarray:
    q_d, q, qd = (np.asarray(x, dtype=float) for x in (q_d, q, qd))
    if not q_d.shape == q.shape == qd.shape:
        raise ValueError(f"dimension mismatch: {q_d.shape}, {q.shape}, {qd.shape}")
    return np.asarray(kp) * (q_d - q) - np.asarray(kd) * qd


def action_to_target(a, beta: float, q0) -> tuple[np.ndarray, bool]:
    """Map an action in [-1, 1]^n to a PD target. Returns (q_d, was_clamped)."""
    a = np.asarray(a, dtype=float)
    clipped = np.clip(a, -1.0, 1.0)
    return beta * clipped + np.asarray(q0, dtype=float), bool(np.any(clipped != a))


def integrate(state: SimState, force, config: SimConfig) -> SimState:
    """One semi-implicit Euler substep of a unit-mass double integrator."""
    force = np.asarray(force, dtype=float)
    if not np.all(np.isfinite(force)):
        raise SimulationFault("non-finite force")
    dt = config.sim_dt
    qd = state.qd + force * dt
    q = state.q + qd * dt
    clamped = (q < config.lower) | (q > config.upper)
    q = np.clip(q, config.lower, config.upper)
    qd = np.where(clamped, 0.0, qd)
    return SimState(q, qd, state.a_prev, state.t_frame, state.last_strike_frame)


def tip(q: np.ndarray, stick: int) -> np.ndarray:
    return q[3 * stick:3 * stick + 3]


def detect_strikes(prev_state: SimState, new_state: SimState, kit: DrumKitLayout,
                   config: SimConfig) -> list[StrikeEvent]:
    """Downward surface crossings between two substep states.

    Strikes are stamped with ``new_state.t_frame``; refractory bookkeeping uses
    ``new_state.last_strike_frame`` and is not mutated here.
    """
    frame = new_state.t_frame
    last = new_state.last_strike_frame.copy()
    dt = config.sim_dt
    strikes = []
    for s, name in enumerate(STICKS):
        p0, p1 = tip(prev_state.q, s), tip(new_state.q, s)
        if not p0[2] > p1[2]:
            continue
        for d in kit.drums:
            top = d.top
            if not p0[2] > top >= p1[2]:
                continue
            alpha = (p0[2] - top) / (p0[2] - p1[2])
            xy = p0[:2] + alpha * (p1[:2] - p0[:2])
            if math.dist(xy, d.center[:2]) > d.radius:
                continue
            speed = (p0[2] - p1[2]) / dt
            if speed < config.v_strike_min or frame - last[d.id] < config.refractory:
                continue
            last[d.id] = frame
            strikes.append(StrikeEvent(frame, d.id, name, float(speed)))
    return strikes


class DrumEnv:
    """Reset/step environment over one drum track.

    ``reset`` with no segment covers the whole track from frame 0.
    """

    def __init__(self, track: DrumTrack, kit: DrumKitLayout | None = None,
                 config: SimConfig | None = None, weights: RewardWeights | None = None,
                 record: bool = False):
        self.track = track
        self.kit = kit or DrumKitLayout.default()
        self.config = config or SimConfig()
        self.weights = weights or RewardWeights()
        if self.config.n != 6:
            raise ValueError("the point-tip model needs n = 6")
        if abs(track.fps - self.config.control_fps) > 1e-12:
            raise ValueError(f"track fps {track.fps} != control fps {self.config.control_fps}")
        self.chain = build_chain(track)
        self.q0 = self.config.home(self.kit)
        self.record = record
        self.log: list[dict] = []
        self.state: SimState | None = None
        self.end_frame = 0
        self.done = True

    def reset(self, segment: Segment | None = None, init_mode: str = "start",
              rng: np.random.Generator | None = None) -> Observation:
        n = self.config.n
        if segment is None:
            start, stop = 0, self.track.n_frames
        else:
            start, stop = segment.frame_range.start, segment.frame_range.stop
            if init_mode == "msi":
                if rng is None:
                    raise ValueError("music-state initialisation needs an rng")
                start = self.chain[sample_init(segment, rng)].frame
            elif init_mode != "start":
                raise ValueError(f"unknown init mode {init_mode!r}")
        self.state = SimState(self.q0.copy(), np.zeros(n), np.zeros(n), start)
        self.end_frame = stop + self.config.tail_padding
        self.done = start >= self.end_frame
        self.log = []
        return self.observe()

    def observe(self) -> Observation:
        s = self.state
        spatial = np.concatenate([s.q[:3], s.q[3:6], self.kit.centers.reshape(-1)])
        goals = goal_window(self.track, s.t_frame, self.config.lookahead).flat()
        return Observation(np.concatenate([s.q, s.qd, s.a_prev]), spatial, goals)

    def step(self, action) -> tuple[Observation, float, RewardBreakdown, list[StrikeEvent], bool]:
        if self.done or self.state is None:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        cfg = self.config
        action = np.asarray(action, dtype=float)
        if action.shape != (cfg.n,):
            raise ValueError(f"action must have shape ({cfg.n},)")
        q_d, clamped = action_to_target(action, cfg.beta, self.q0)
        a_t = np.clip(action, -1.0, 1.0)
        frame = self.state.t_frame
        qd_start = self.state.qd.copy()
        strikes: list[StrikeEvent] = []
        state = self.state
        try:
            for _ in range(cfg.substeps):
                force = pd_control(q_d, state.q, state.qd, cfg.kp, cfg.kd)
                new = integrate(state, force, cfg)
                new.last_strike_frame = state.last_strike_frame
                hits = detect_strikes(state, new, self.kit, cfg)
                if hits:
                    new.last_strike_frame = new.last_strike_frame.copy()
                    for h in hits:
                        new.last_strike_frame[h.drum] = h.frame
                strikes.extend(hits)
                state = new
        except SimulationFault:
            self.done = True
            raise
        qddot = (state.qd - qd_start) * cfg.control_fps
        targets = self.track.drums_at(frame)
        contact = contact_reward(StepContactState(
            targets=targets, executed=frozenset(h.drum for h in strikes),
            stick_positions=state.q.reshape(2, 3), drum_positions=self.kit.centers,
        ), self.weights)
        breakdown = total_reward(contact, regularization_terms(a_t, self.state.a_prev, qddot, self.weights))
        self.state = SimState(state.q, state.qd, a_t, frame + 1, state.last_strike_frame)
        self.done = self.state.t_frame >= self.end_frame
        if self.record:
            self.log.append({
                "frame": frame,
                "q": state.q.tolist(),
                "action": a_t.tolist(),
                "clamped": clamped,
                "targets": sorted(targets),
                "strikes": [h.to_dict() for h in strikes],
                "reward": breakdown.to_dict(),
            })
        return self.observe(), breakdown.total, breakdown, strikes, self.done
