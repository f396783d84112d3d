import json

import numpy as np
import pytest

from drumchain.midi_ingest import SNARE, DrumTrack
from drumchain.reward import RewardWeights
from drumchain.rhythm import build_chain, decompose
from drumchain.sim import (DrumEnv, DrumKitLayout, SimConfig, SimState, SimulationFault, action_to_target,
                           default_q0, detect_strikes, integrate, pd_control)

KIT = DrumKitLayout.default()
CFG = SimConfig()


def at_rest(q) -> SimState:
    q = np.asarray(q, float)
    return SimState(q, np.zeros(6), np.zeros(6))


class TestKit:
    def test_default_valid(self):
        assert KIT.centers.shape == (6, 3)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            DrumKitLayout.from_mapping({"snare": {"center": [0.35, 0.25, 0.70]}})

    def test_override(self):
        kit = DrumKitLayout.from_mapping({"snare": {"radius": 0.1, "surface": 0.72}})
        assert kit.drums[SNARE].radius == 0.1 and kit.drums[SNARE].top == 0.72

    def test_unknown_drum(self):
        with pytest.raises(ValueError):
            DrumKitLayout.from_mapping({"cowbell": {}})


class TestConfig:
    def test_substeps(self):
        assert CFG.substeps == 4

    def test_indivisible_dt(self):
        with pytest.raises(ValueError):
            SimConfig(sim_dt=0.003)

    def test_bad_q0(self):
        with pytest.raises(ValueError):
            SimConfig(q0=[0.0] * 5)


class TestControl:
    def test_at_target(self):
        q = np.ones(6)
        assert np.all(pd_control(q, q, np.zeros(6), 100, 20) == 0)

    def test_balanced(self):
        f = pd_control(np.full(6, 0.1), np.zeros(6), np.full(6, 0.5), 100, 20)
        assert np.allclose(f, 0)

    def test_zero_gains(self):
        rng = np.random.default_rng(0)
        assert np.all(pd_control(*rng.normal(size=(3, 6)), 0, 0) == 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pd_control(np.zeros(6), np.zeros(5), np.zeros(6), 1, 1)

    def test_action_mapping(self):
        q0 = np.arange(6.0)
        assert np.array_equal(action_to_target(np.zeros(6), 0.5, q0)[0], q0)
        a = np.eye(6)[0]
        assert np.allclose(action_to_target(a, 0.5, q0)[0], q0 + 0.5 * a)
        q_d, clamped = action_to_target(2 * a, 0.5, q0)
        assert clamped and np.allclose(q_d, q0 + 0.5 * a)


class TestIntegrate:
    q = default_q0(KIT)

    def test_rest(self):
        s = integrate(at_rest(self.q), np.zeros(6), CFG)
        assert np.array_equal(s.q, self.q) and np.array_equal(s.qd, np.zeros(6))

    def test_constant_force(self):
        f = np.array([1.0, -2.0, 0.5, 0, 0, 3.0])
        s = integrate(at_rest(self.q), f, CFG)
        dt = CFG.sim_dt
        assert np.allclose(s.qd, f * dt) and np.allclose(s.q, self.q + f * dt * dt)

    def test_zero_force_keeps_velocity(self):
        s = SimState(self.q.copy(), np.full(6, 0.01), np.zeros(6))
        for _ in range(10):
            s = integrate(s, np.zeros(6), CFG)
        assert np.array_equal(s.qd, np.full(6, 0.01))

    def test_non_finite(self):
        with pytest.raises(SimulationFault):
            integrate(at_rest(self.q), np.array([np.nan, 0, 0, 0, 0, 0]), CFG)

    def test_workspace_clamp(self):
        s = SimState(np.array([0.999, 0, 1, 0.5, 0, 1]), np.array([10.0, 0, 0, 0, 0, 0]), np.zeros(6))
        s = integrate(s, np.zeros(6), CFG)
        assert s.q[0] == 1.0 and s.qd[0] == 0.0

    def test_step_response(self):
        q_d = self.q + 0.5 * np.array([0.2, -0.2, 0.1, -0.1, 0.2, 0.1])
        s = at_rest(self.q)
        for k in range(int(2.0 / CFG.sim_dt)):
            s = integrate(s, pd_control(q_d, s.q, s.qd, CFG.kp, CFG.kd), CFG)
        assert np.linalg.norm(s.q - q_d) < 1e-3


class TestStrikes:
    snare = KIT.drums[SNARE]

    def crossing(self, speed, dx=0.0):
        q = default_q0(KIT)
        x, y, z = self.snare.center
        dz = speed * CFG.sim_dt
        prev = q.copy()
        prev[3:] = [x + dx, y, z + dz / 2]
        new = prev.copy()
        new[5] -= dz
        a, b = at_rest(prev), at_rest(new)
        b.t_frame = 7
        return detect_strikes(a, b, KIT, CFG)

    def test_strike(self):
        hits = self.crossing(0.5)
        assert len(hits) == 1 and hits[0].drum == SNARE and hits[0].stick == "R" and hits[0].frame == 7
        assert hits[0].impact_speed == pytest.approx(0.5)

    def test_too_slow(self):
        assert self.crossing(0.1) == []

    def test_outside_radius(self):
        assert self.crossing(0.5, dx=self.snare.radius + 0.01) == []

    def test_refractory(self):
        q = default_q0(KIT)
        x, y, z = self.snare.center
        prev, new = q.copy(), q.copy()
        prev[3:] = [x, y, z + 0.002]
        new[3:] = [x, y, z - 0.002]
        a, b = at_rest(prev), at_rest(new)
        b.t_frame = 8
        b.last_strike_frame = b.last_strike_frame.copy()
        b.last_strike_frame[SNARE] = 7
        assert detect_strikes(a, b, KIT, CFG) == []
        b.last_strike_frame[SNARE] = 6
        assert len(detect_strikes(a, b, KIT, CFG)) == 1


TRACK = DrumTrack(50, 60, {10: {0}, 20: {1}, 30: {0, 1}, 45: {4}})


class TestEnv:
    def test_reset_start(self):
        env = DrumEnv(TRACK)
        seg = decompose(build_chain(TRACK), 2)[1]
        env.reset(seg)
        assert env.state.t_frame == seg.frame_range.start == 30

    def test_msi_reproducible(self):
        seg = decompose(build_chain(TRACK), 4)[0]
        starts = []
        for _ in range(2):
            rng = np.random.default_rng(3)
            env = DrumEnv(TRACK)
            starts.append([(env.reset(seg, "msi", rng), env.state.t_frame)[1] for _ in range(10)])
        assert starts[0] == starts[1] and set(starts[0]) <= {10, 20, 30, 45}

    def test_observation_widths(self):
        env = DrumEnv(TRACK, config=SimConfig(lookahead=5))
        obs = env.reset()
        assert obs.widths == (18, 24, 36)
        for _ in range(20):
            obs, *_ = env.step(np.zeros(6))
            assert obs.widths == (18, 24, 36) and obs.vector().shape == (78,)

    def test_zero_policy_misses_everything(self):
        env = DrumEnv(TRACK, record=True)
        env.reset()
        done = False
        while not done:
            *_, done = env.step(np.zeros(6))
        w = RewardWeights()
        for rec in env.log:
            r = rec["reward"]
            assert rec["strikes"] == []
            assert r["missed"] == w.w_missed * len(rec["targets"])
            if not rec["targets"]:
                assert r["correct"] + r["wrong"] + r["missed"] + r["proximity"] == 0.0

    def test_done_and_step_after_done(self):
        env = DrumEnv(TRACK)
        env.reset()
        n = 0
        done = False
        while not done:
            *_, done = env.step(np.zeros(6))
            n += 1
        assert n == TRACK.n_frames + CFG.tail_padding
        with pytest.raises(RuntimeError):
            env.step(np.zeros(6))

    def test_bad_action_shape(self):
        env = DrumEnv(TRACK)
        env.reset()
        with pytest.raises(ValueError):
            env.step(np.zeros(5))

    def test_fps_mismatch(self):
        with pytest.raises(ValueError):
            DrumEnv(DrumTrack(100, 1, {0: {0}}))

    def test_clamped_action_logged(self):
        env = DrumEnv(TRACK, record=True)
        env.reset()
        env.step(np.full(6, 3.0))
        assert env.log[0]["clamped"] is True and env.log[0]["action"] == [1.0] * 6

    def test_deterministic(self):
        logs = []
        for _ in range(2):
            rng = np.random.default_rng(11)
            env = DrumEnv(TRACK, record=True)
            env.reset()
            done = False
            while not done:
                *_, done = env.step(rng.uniform(-1, 1, 6))
            logs.append(json.dumps(env.log))
        assert logs[0] == logs[1]

    def test_refractory_respected(self):
        # vertical bang-bang drives both tips through the hi-hat and snare repeatedly
        track = DrumTrack(50, 300, {10: {0}})
        strikes = []
        for seed in range(3):
            rng = np.random.default_rng(seed)
            env = DrumEnv(track)
            env.reset()
            done = False
            while not done:
                a = np.zeros(6)
                a[2] = a[5] = rng.choice([-1.0, 1.0])
                _, _, _, hits, done = env.step(a)
                strikes += [(seed, h) for h in hits]
        assert len(strikes) > 10
        for seed in range(3):
            for d in range(6):
                frames = [h.frame for s, h in strikes if s == seed and h.drum == d]
                assert all(b - a >= CFG.refractory for a, b in zip(frames, frames[1:]))
