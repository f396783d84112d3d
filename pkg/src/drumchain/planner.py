"""Scripted baseline drummer.

Sticks are assigned greedily, step by step, to minimise travel. Each strike is
a cosine stroke from a hover point above the drum that crosses the drum's top
plane at the middle of the target frame. Moves between hover points are
rest-to-rest cycloidal legs (rise first, descend last) so a tip never passes
down through a drum it is not aiming at. Strikes that cannot be reached in
time under the speed and acceleration limits are skipped and logged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Sequence

import numpy as np

from .midi_ingest import DrumTrack
from .rhythm import LEFT, RIGHT, RhythmicContactChain, build_chain
from .sim import STICKS, DrumEnv, DrumKitLayout, SimConfig, SimState, StrikeEvent, detect_strikes


@dataclass(frozen=True)
class PlannerLimits:
    v_max: float = 3.0
    a_max: float = 40.0
    hover: float = 0.08
    depth: float = 0.01  # how far below the top plane a stroke bottoms out
    stroke_period_max: float = 0.3
    lookahead: bool = False
    lookahead_weight: float = 0.5

    def __post_init__(self):
        if self.v_max <= 0 or self.a_max <= 0 or self.hover <= 0 or self.depth <= 0:
            raise ValueError("planner limits must be positive")

    @property
    def amplitude(self) -> float:
        return (self.hover + self.depth) / 2

    @property
    def crossing_phase(self) -> float:
        return math.acos(1.0 - self.hover / self.amplitude)

    @property
    def pre_fraction(self) -> float:
        return self.crossing_phase / (2 * math.pi)

    @property
    def stroke_period_min(self) -> float:
        a = self.amplitude
        return max(2 * math.pi * math.sqrt(a / self.a_max), 2 * math.pi * a / self.v_max)

    def leg_time(self, distance: float) -> float:
        if distance <= 0:
            return 0.0
        return max(2 * distance / self.v_max, math.sqrt(2 * math.pi * distance / self.a_max))


# -- trajectory primitives ---------------------------------------------------


@dataclass(frozen=True)
class Move:
    t0: float
    t1: float
    p0: np.ndarray
    p1: np.ndarray
    phase: str = "travel"

    @property
    def end(self) -> np.ndarray:
        return self.p1

    def eval(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dur = self.t1 - self.t0
        u = np.clip((t - self.t0) / dur, 0.0, 1.0)
        s = u - np.sin(2 * np.pi * u) / (2 * np.pi)
        ds = (1 - np.cos(2 * np.pi * u)) / dur
        delta = self.p1 - self.p0
        return self.p0 + s[:, None] * delta, ds[:, None] * delta


@dataclass(frozen=True)
class Stroke:
    t0: float
    period: float
    hover: np.ndarray  # hover point above the drum
    amplitude: float
    phase: str = "strike"

    @property
    def t1(self) -> float:
        return self.t0 + self.period

    @property
    def end(self) -> np.ndarray:
        return self.hover

    def eval(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = 2 * np.pi / self.period
        tau = np.clip(t - self.t0, 0.0, self.period)
        pos = np.repeat(self.hover[None, :], len(t), axis=0)
        vel = np.zeros_like(pos)
        pos[:, 2] -= self.amplitude * (1 - np.cos(w * tau))
        vel[:, 2] = -self.amplitude * w * np.sin(w * tau)
        return pos, vel


def route(p: np.ndarray, target: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Leg endpoints from p to target: climb before crossing over, descend after."""
    if target[2] >= p[2]:
        corner = np.array([p[0], p[1], target[2]])
    else:
        corner = np.array([target[0], target[1], p[2]])
    legs = []
    for a, b in ((p, corner), (corner, target)):
        if np.linalg.norm(b - a) > 1e-12:
            legs.append((a, b))
    return legs


@dataclass
class _Stick:
    name: str
    pos: np.ndarray
    free_at: float = 0.0
    prims: list = field(default_factory=list)

    def travel_time(self, target: np.ndarray, limits: PlannerLimits) -> float:
        return sum(limits.leg_time(float(np.linalg.norm(b - a))) for a, b in route(self.pos, target))

    def fit(self, target: np.ndarray, t_cross: float, t_gap: float, limits: PlannerLimits) -> float | None:
        """Stroke period for a crossing at t_cross, or None if unreachable."""
        avail = t_cross - self.free_at - self.travel_time(target, limits)
        t_min = limits.stroke_period_min
        t_fit = avail / limits.pre_fraction
        if t_fit < t_min - 1e-12:
            return None
        return min(max(t_min, min(limits.stroke_period_max, t_gap)), t_fit)

    def commit(self, target: np.ndarray, t_cross: float, period: float, limits: PlannerLimits):
        t = self.free_at
        for a, b in route(self.pos, target):
            dur = limits.leg_time(float(np.linalg.norm(b - a)))
            self.prims.append(Move(t, t + dur, a, b))
            t += dur
        start = t_cross - limits.pre_fraction * period
        self.prims.append(Stroke(start, period, target, limits.amplitude))
        self.pos = target
        self.free_at = start + period


def _hover_point(kit: DrumKitLayout, drum: int, limits: PlannerLimits) -> np.ndarray:
    return kit.top_center(drum) + np.array([0.0, 0.0, limits.hover])


def _start_positions(kit: DrumKitLayout, start) -> dict[str, np.ndarray]:
    q = np.asarray(start, dtype=float) if start is not None else SimConfig().home(kit)
    return {LEFT: q[:3].copy(), RIGHT: q[3:6].copy()}


def _crossing_time(frame: int, fps: float) -> float:
    return (frame + 0.5) / fps


def _gaps(chain: RhythmicContactChain) -> list[float]:
    times = [s.time for s in chain.steps]
    return [b - a for a, b in zip(times, times[1:])] + [math.inf]


# -- assignment ----------------------------------------------------------------


@dataclass(frozen=True)
class StepAssignment:
    frame: int
    pairs: tuple[tuple[int, str], ...]  # (drum, stick)
    dropped: tuple[int, ...] = ()


@dataclass(frozen=True)
class Assignment:
    steps: tuple[StepAssignment, ...]

    @property
    def dropped(self) -> dict[int, tuple[int, ...]]:
        return {s.frame: s.dropped for s in self.steps if s.dropped}

    def to_dict(self) -> dict:
        return {"steps": [{"frame": s.frame, "pairs": [[d, st] for d, st in s.pairs],
                           "dropped": list(s.dropped)} for s in self.steps]}


def assign_sticks(chain: RhythmicContactChain, kit: DrumKitLayout | None = None,
                  limits: PlannerLimits | None = None, start=None) -> Assignment:
    """Greedy stick-to-drum assignment in chain order.

    Per step, every injective pairing of (up to two) drums onto the allowed
    sticks is ranked by (number of unreachable strikes, summed distance from
    each stick's last committed position, drum ids). Drums left out of the
    best pairing are recorded as dropped.
    """
    kit = kit or DrumKitLayout.default()
    limits = limits or PlannerLimits()
    sticks = {name: _Stick(name, pos) for name, pos in _start_positions(kit, start).items()}
    gaps = _gaps(chain)
    out = []
    for i, step in enumerate(chain.steps):
        t_cross = _crossing_time(step.frame, chain.fps)
        allowed = [s for s in STICKS if s in step.sticks]
        k = min(len(step.drums), len(allowed))
        best = None
        for drums in combinations(sorted(step.drums), k):
            for order in permutations(allowed, k):
                pairs = tuple(zip(drums, order))
                periods = [sticks[s].fit(_hover_point(kit, d, limits), t_cross, gaps[i], limits)
                           for d, s in pairs]
                cost = sum(float(np.linalg.norm(sticks[s].pos - _hover_point(kit, d, limits)))
                           for d, s in pairs)
                if limits.lookahead and i + 1 < len(chain):
                    cost += limits.lookahead_weight * _lookahead_cost(
                        sticks, pairs, chain.steps[i + 1].drums, kit, limits)
                key = (sum(p is None for p in periods), round(cost, 9), drums,
                       tuple(STICKS.index(s) for s in order))
                if best is None or key < best[0]:
                    best = (key, pairs, periods)
        _, pairs, periods = best if best else (None, (), ())
        for (d, s), period in zip(pairs, periods):
            if period is not None:
                sticks[s].commit(_hover_point(kit, d, limits), t_cross, period, limits)
        chosen = {d for d, _ in pairs}
        out.append(StepAssignment(step.frame, tuple(sorted(pairs)),
                                  tuple(sorted(step.drums - chosen))))
    return Assignment(tuple(out))


def _lookahead_cost(sticks, pairs, next_drums, kit, limits) -> float:
    pos = {name: st.pos for name, st in sticks.items()}
    for d, s in pairs:
        pos[s] = _hover_point(kit, d, limits)
    return sum(min(float(np.linalg.norm(p - _hover_point(kit, d, limits))) for p in pos.values())
               for d in next_drums)


# -- trajectories ----------------------------------------------------------------


@dataclass(frozen=True)
class PlannedStrike:
    frame: int
    drum: int
    stick: str
    t_cross: float
    period: float


@dataclass
class TipPlan:
    start: dict[str, np.ndarray]
    prims: dict[str, list]
    strikes: list[PlannedStrike]
    infeasible: list[dict]

    def sample(self, stick: str, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tip position and velocity of one stick at sorted times ``t``."""
        t = np.asarray(t, dtype=float)
        pos = np.repeat(self.start[stick][None, :], len(t), axis=0)
        vel = np.zeros_like(pos)
        prims = self.prims[stick]
        for k, prim in enumerate(prims):
            nxt = prims[k + 1].t0 if k + 1 < len(prims) else math.inf
            i0 = np.searchsorted(t, prim.t0, side="left")
            i1 = np.searchsorted(t, prim.t1, side="right")
            i2 = np.searchsorted(t, nxt, side="left")
            pos[i1:i2] = prim.end
            vel[i1:i2] = 0.0
            if i1 > i0:
                pos[i0:i1], vel[i0:i1] = prim.eval(t[i0:i1])
        return pos, vel

    def configuration(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pl, vl = self.sample(LEFT, t)
        pr, vr = self.sample(RIGHT, t)
        return np.hstack([pl, pr]), np.hstack([vl, vr])

    def waypoints(self, fps: float) -> list[dict]:
        """Frame-indexed (frame, position, phase) list per stick for export."""
        out = []
        for stick in STICKS:
            for prim in self.prims[stick]:
                out.append({"stick": stick, "frame_start": int(math.floor(prim.t0 * fps)),
                            "frame_end": int(math.ceil(prim.t1 * fps)), "phase": prim.phase,
                            "target": [float(v) for v in prim.end]})
        return sorted(out, key=lambda w: (w["frame_start"], w["stick"]))

    def to_dict(self, fps: float) -> dict:
        return {
            "strikes": [{"frame": s.frame, "drum": s.drum, "stick": s.stick,
                         "t_cross": s.t_cross, "period": s.period} for s in self.strikes],
            "infeasible": self.infeasible,
            "waypoints": self.waypoints(fps),
        }


def plan_trajectories(assignment: Assignment, kit: DrumKitLayout | None = None,
                      limits: PlannerLimits | None = None, fps: float = 50,
                      start=None) -> TipPlan:
    kit = kit or DrumKitLayout.default()
    limits = limits or PlannerLimits()
    starts = _start_positions(kit, start)
    sticks = {name: _Stick(name, pos.copy()) for name, pos in starts.items()}
    frames = [s.frame for s in assignment.steps]
    gaps = [(b - a) / fps for a, b in zip(frames, frames[1:])] + [math.inf]
    strikes, infeasible = [], []
    for step, gap in zip(assignment.steps, gaps):
        t_cross = _crossing_time(step.frame, fps)
        used = set()
        for drum in step.dropped:
            infeasible.append({"frame": step.frame, "drum": drum, "stick": None,
                               "reason": "no free stick"})
        for drum, stick in step.pairs:
            if stick in used:
                infeasible.append({"frame": step.frame, "drum": drum, "stick": stick,
                                   "reason": "stick already used in this step"})
                continue
            used.add(stick)
            target = _hover_point(kit, drum, limits)
            period = sticks[stick].fit(target, t_cross, gap, limits)
            if period is None:
                infeasible.append({"frame": step.frame, "drum": drum, "stick": stick,
                                   "reason": "insufficient time"})
                continue
            sticks[stick].commit(target, t_cross, period, limits)
            strikes.append(PlannedStrike(step.frame, drum, stick, t_cross, period))
    return TipPlan(starts, {n: s.prims for n, s in sticks.items()}, strikes, infeasible)


# -- execution -------------------------------------------------------------------


def _kinematic_strikes(plan: TipPlan, n_frames: int, kit: DrumKitLayout,
                       config: SimConfig) -> list[StrikeEvent]:
    sub = config.substeps
    t = np.arange(n_frames * sub + 1) * config.sim_dt
    q, qd = plan.configuration(t)
    tops = np.array([d.top for d in kit.drums])
    z = q[:, [2, 5]]
    # substeps where some tip passes down through some top plane
    cand = np.any((z[:-1, :, None] > tops) & (z[1:, :, None] <= tops), axis=(1, 2))
    strikes = []
    last = SimState(q[0], qd[0], np.zeros(config.n)).last_strike_frame
    for j in np.flatnonzero(cand):
        prev = SimState(q[j], qd[j], np.zeros(config.n))
        new = SimState(q[j + 1], qd[j + 1], np.zeros(config.n), int(j // sub), last)
        hits = detect_strikes(prev, new, kit, config)
        for h in hits:
            last[h.drum] = h.frame
        strikes.extend(hits)
    return strikes


class PDTracker:
    """Chooses each frame's action so the PD-driven tips follow a reference.

    Within one control frame the closed loop is linear in the held target, so
    the target is the least-squares fit of the predicted substep positions
    (and end-of-frame velocity) to the reference.
    """

    def __init__(self, config: SimConfig, q0: np.ndarray, velocity_weight: float | None = None):
        self.config = config
        self.q0 = q0
        dt = config.sim_dt
        self.vel_w = (1.0 / config.control_fps) ** 2 if velocity_weight is None else velocity_weight
        n, sub = config.n, config.substeps
        # responses to unit initial position, unit initial velocity and unit target
        self.resp = {}
        for key, (q, v, u) in {"q": (1.0, 0.0, 0.0), "v": (0.0, 1.0, 0.0), "u": (0.0, 0.0, 1.0)}.items():
            qs, vs = np.zeros((sub, n)), None
            qq, vv = np.full(n, q), np.full(n, v)
            for j in range(sub):
                vv = vv + (config.kp * (u - qq) - config.kd * vv) * dt
                qq = qq + vv * dt
                qs[j] = qq
            self.resp[key] = (qs, vv)

    def action(self, q, qd, ref_pos: np.ndarray, ref_vel_end: np.ndarray) -> np.ndarray:
        (qq, vq), (qv, vv), (qu, vu) = self.resp["q"], self.resp["v"], self.resp["u"]
        free_q = qq * q + qv * qd
        free_v = vq * q + vv * qd
        w = self.vel_w
        num = np.sum(qu * (ref_pos - free_q), axis=0) + w * vu * (ref_vel_end - free_v)
        den = np.sum(qu * qu, axis=0) + w * vu * vu
        u = num / den
        return np.clip((u - self.q0) / self.config.beta, -1.0, 1.0)


def perform(track: DrumTrack, kit: DrumKitLayout | None = None, limits: PlannerLimits | None = None,
            mode: str = "kinematic", config: SimConfig | None = None,
            rollout: list | None = None, plan_out: list | None = None) -> list[StrikeEvent]:
    """Play a track with the baseline planner and return the executed strikes.

    ``mode="kinematic"`` replays the planned tip paths directly through the
    strike detector; ``mode="pd"`` drives the simulator with actions. Pass a
    list as ``rollout`` to collect per-frame pd records, and as ``plan_out``
    to receive the TipPlan.
    """
    kit = kit or DrumKitLayout.default()
    limits = limits or PlannerLimits()
    config = config or SimConfig(control_fps=track.fps)
    q0 = config.home(kit)
    chain = build_chain(track)
    plan = plan_trajectories(assign_sticks(chain, kit, limits, q0), kit, limits, track.fps, q0)
    if plan_out is not None:
        plan_out.append(plan)
    if not chain.steps:
        return []
    n_frames = track.n_frames + config.tail_padding
    if mode == "kinematic":
        return _kinematic_strikes(plan, n_frames, kit, config)
    if mode != "pd":
        raise ValueError(f"unknown mode {mode!r}")
    env = DrumEnv(track, kit, config, record=rollout is not None)
    env.reset()
    tracker = PDTracker(config, q0)
    sub, dt = config.substeps, config.sim_dt
    t_all = np.arange(n_frames * sub + 1) * dt
    ref_q, ref_v = plan.configuration(t_all)
    strikes = []
    done = False
    while not done:
        k = env.state.t_frame
        window = slice(k * sub + 1, (k + 1) * sub + 1)
        a = tracker.action(env.state.q, env.state.qd, ref_q[window], ref_v[(k + 1) * sub])
        _, _, _, hits, done = env.step(a)
        strikes.extend(hits)
    if rollout is not None:
        rollout.extend(env.log)
    return strikes
