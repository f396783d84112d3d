import json
import math

import pytest
from hypothesis import assume, given, strategies as st

from conftest import tracks
from drumchain.complexity import (UndefinedMetricError, compute_bpm, compute_entropy, compute_npvi,
                                  compute_polyphony, count_drums, count_time_sig_changes, npvi_from_iois,
                                  song_features)
from drumchain.generate import isochronous
from drumchain.midi_ingest import DrumTrack, MidiEvent, MidiSong, ingest, load_mapping
from drumchain.rhythm import build_chain


def song(tempos=(), sigs=(), end_tick=0, tpq=480):
    events = [MidiEvent(end_tick, "note_off", 9, 38, 0)] if end_tick else []
    return MidiSong(tpq, events, list(tempos), list(sigs))


class TestBpm:
    def test_single(self):
        assert compute_bpm(song([(0, 500000)], end_tick=960)) == 120

    def test_default(self):
        assert compute_bpm(song(end_tick=960)) == 120

    def test_longest_wins(self):
        # 500000 us/qn for 10 s = 20 quarters, then 400000 for 2 s = 5 quarters
        s = song([(0, 500000), (20 * 480, 400000)], end_tick=25 * 480)
        assert compute_bpm(s) == 120

    def test_short_first_tempo_loses(self):
        s = song([(0, 500000), (480, 1_000_000)], end_tick=4 * 480)
        assert compute_bpm(s) == 60

    def test_empty_song(self):
        assert compute_bpm(song([(0, 600000)])) == 100


class TestNpvi:
    def test_isochronous(self):
        assert npvi_from_iois([0.5, 0.5, 0.5]) == 0

    def test_two(self):
        assert npvi_from_iois([0.1, 0.2]) == pytest.approx(66.6667, abs=1e-4)

    @pytest.mark.parametrize("d", [0.01, 0.37, 5.0])
    def test_hand_value(self, d):
        assert npvi_from_iois([d, d, 2 * d, 2 * d]) == pytest.approx(200 / 9, abs=1e-9)

    def test_too_few(self):
        with pytest.raises(UndefinedMetricError):
            compute_npvi(build_chain(DrumTrack(50, 5, {0: {0}, 4: {1}})))

    @given(st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=20), st.floats(1e-2, 1e2))
    def test_scale_invariant_and_bounded(self, iois, c):
        v = npvi_from_iois(iois)
        assert 0 <= v <= 200
        assert npvi_from_iois([c * x for x in iois]) == pytest.approx(v, abs=1e-7)


class TestEntropy:
    def test_one_drum(self):
        assert compute_entropy(DrumTrack(50, 3, {0: {2}, 2: {2}})) == 0

    def test_uniform(self):
        assert compute_entropy(DrumTrack(50, 4, {i: {i} for i in range(4)})) == pytest.approx(1.0)

    def test_three_one(self):
        t = DrumTrack(50, 4, {0: {0}, 1: {0}, 2: {0}, 3: {1}})
        assert compute_entropy(t) == pytest.approx(0.811278, abs=1e-6)

    def test_empty(self):
        with pytest.raises(UndefinedMetricError):
            compute_entropy(DrumTrack())

    @given(tracks())
    def test_bounds(self, track):
        assume(track.n_hits)
        assert 0 <= compute_entropy(track) <= 1 + 1e-12


class TestCounts:
    def test_sig_changes(self):
        assert count_time_sig_changes(song(sigs=[(0, 4, 4)])) == 0
        assert count_time_sig_changes(song(sigs=[(0, 4, 4), (10, 3, 4), (20, 4, 4)])) == 2

    def test_repeated_sig_not_a_change(self):
        assert count_time_sig_changes(song(sigs=[(0, 4, 4), (10, 4, 4)])) == 0

    def test_drums(self):
        assert count_drums(DrumTrack()) == 0
        assert count_drums(DrumTrack(50, 3, {0: {0}, 2: {1}})) == 2
        assert count_drums(DrumTrack(50, 6, {i: {i} for i in range(6)})) == 6


class TestPolyphony:
    def test_hit_frame_denominator(self):
        t = DrumTrack(50, 3, {0: {1}, 1: {0, 1}, 2: {0, 1, 4}})
        assert compute_polyphony(t) == pytest.approx(100 / 3)

    def test_no_dense_frames(self):
        assert compute_polyphony(DrumTrack(50, 2, {0: {0, 1}, 1: {3}})) == 0

    def test_empty(self):
        with pytest.raises(UndefinedMetricError):
            compute_polyphony(DrumTrack())

    @given(tracks(max_drums=2), st.data())
    def test_adding_third_drum_never_decreases(self, track, data):
        two = [f for f, d in track.hits.items() if len(d) == 2]
        assume(two)
        f = data.draw(st.sampled_from(two))
        extra = data.draw(st.sampled_from(sorted(set(range(6)) - track.hits[f])))
        hits = dict(track.hits)
        hits[f] = hits[f] | {extra}
        assert compute_polyphony(DrumTrack(50, track.n_frames, hits)) >= compute_polyphony(track)


class TestSongFeatures:
    def test_isochronous(self):
        g = isochronous(2, 120, 10)
        f = song_features(g.song, g.track, build_chain(g.track))
        assert f.npvi == 0 and f.polyphony_pct == 0 and f.entropy == pytest.approx(1.0)
        assert f.bpm == 120 and f.n_drums == 2

    def test_empty(self):
        f = song_features(None, DrumTrack(), build_chain(DrumTrack()))
        assert (f.npvi, f.entropy, f.polyphony_pct, f.n_drums) == (None, None, None, 0)

    def test_golden_fixture(self, fixtures):
        s, t = ingest((fixtures / "groove.mid").read_bytes(), load_mapping(fixtures / "groove_mapping.toml"))
        got = song_features(s, t, build_chain(t)).row("groove")
        want = json.loads((fixtures / "groove_features.json").read_text())
        assert got.keys() == want.keys()
        for k, v in want.items():
            if isinstance(v, float):
                assert math.isclose(got[k], v, abs_tol=1e-9), k
            else:
                assert got[k] == v, k
