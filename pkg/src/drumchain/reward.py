"""Dense per-frame contact reward plus action-rate and acceleration penalties."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class RewardWeights:
    w_correct: float = 1.0
    w_wrong: float = -0.5
    w_missed: float = -2.0
    w_prox: float = -1.0
    w_action_rate: float = -1e-3
    w_dof_acc: float = -2.5e-7
    proximity_every_frame: bool = True

    def __post_init__(self):
        if self.w_correct <= 0:
            raise ValueError("w_correct must be positive")
        for name in ("w_wrong", "w_missed", "w_prox", "w_action_rate", "w_dof_acc"):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} is a penalty and must be <= 0")

    @classmethod
    def from_mapping(cls, table: Mapping) -> "RewardWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(table) - known
        if unknown:
            raise ValueError(f"unknown reward keys: {sorted(unknown)}")
        return replace(cls(), **dict(table))


@dataclass(frozen=True)
class StepContactState:
    targets: frozenset[int]
    executed: frozenset[int]
    stick_positions: np.ndarray  # (2, 3): left, right
    drum_positions: np.ndarray  # (6, 3)
    at_hit_time: bool = True  # a strike is due this frame


@dataclass(frozen=True)
class RewardBreakdown:
    correct: float = 0.0
    wrong: float = 0.0
    missed: float = 0.0
    proximity: float = 0.0
    action_rate: float = 0.0
    dof_acc: float = 0.0
    n_correct: int = 0
    n_wrong: int = 0
    n_missed: int = 0

    @property
    def contact(self) -> float:
        return self.correct + self.wrong + self.missed + self.proximity

    @property
    def regularization(self) -> float:
        return self.action_rate + self.dof_acc

    @property
    def total(self) -> float:
        return self.contact + self.regularization

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["total"] = self.total
        return doc


def proximity_distance(targets, stick_positions, drum_positions) -> float:
    """Sum over both sticks of the distance to the nearest target drum."""
    if not targets:
        return 0.0
    sticks = np.asarray(stick_positions, dtype=float)
    drums = np.asarray(drum_positions, dtype=float)[sorted(targets)]
    dists = np.linalg.norm(sticks[:, None, :] - drums[None, :, :], axis=-1)
    return float(dists.min(axis=1).sum())


def contact_reward(state: StepContactState, w: RewardWeights = RewardWeights()) -> RewardBreakdown:
    targets, executed = frozenset(state.targets), frozenset(state.executed)
    n_correct = len(executed & targets)
    n_wrong = len(executed - targets)
    n_missed = len(targets - executed)
    prox = 0.0
    if targets and (w.proximity_every_frame or state.at_hit_time):
        prox = w.w_prox * proximity_distance(targets, state.stick_positions, state.drum_positions)
    return RewardBreakdown(
        correct=n_correct * w.w_correct,
        wrong=n_wrong * w.w_wrong,
        missed=n_missed * w.w_missed,
        proximity=prox,
        n_correct=n_correct, n_wrong=n_wrong, n_missed=n_missed,
    )


def regularization_terms(a_t: Sequence[float], a_prev: Sequence[float], qddot: Sequence[float],
                         w: RewardWeights = RewardWeights()) -> tuple[float, float]:
    a_t, a_prev, qddot = (np.asarray(x, dtype=float) for x in (a_t, a_prev, qddot))
    if a_t.shape != a_prev.shape:
        raise ValueError(f"action shapes differ: {a_t.shape} vs {a_prev.shape}")
    if qddot.ndim != 1:
        raise ValueError("qddot must be a vector")
    da = a_t - a_prev
    return w.w_action_rate * float(da @ da), w.w_dof_acc * float(qddot @ qddot)


def regularization_reward(a_t, a_prev, qddot, w: RewardWeights = RewardWeights()) -> float:
    return sum(regularization_terms(a_t, a_prev, qddot, w))


def total_reward(contact: RewardBreakdown, reg: float | tuple[float, float]) -> RewardBreakdown:
    """Fold the regularisation terms into the breakdown; ``.total`` is the step reward.

    A bare scalar is booked entirely under ``action_rate``.
    """
    action_rate, dof_acc = reg if isinstance(reg, tuple) else (float(reg), 0.0)
    return replace(contact, action_rate=action_rate, dof_acc=dof_acc)
