"""Independent ingestion oracle: mido decoding, exact rational timing.

Produces the golden drum-track JSON and golden feature record for the shipped
fixture. Shares no code with drumchain. Run from the repo root:

    python tests/oracles/ingest_oracle.py
"""
import json
import math
from collections import Counter
from fractions import Fraction
from pathlib import Path

import mido

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"
KIT = ("hi-hat", "snare", "tom 1", "tom 2", "cymbal 1", "cymbal 2")


def read_mapping(path):
    with open(path, "rb") as fh:
        table = tomllib.load(fh)["mapping"]
    return {int(k): KIT.index(v) for k, v in table.items()}


def absolute_messages(mf):
    """(tick, track index, order, msg) for every message, merged."""
    out = []
    for ti, track in enumerate(mf.tracks):
        tick = 0
        for order, msg in enumerate(track):
            tick += msg.time
            out.append((tick, ti, order, msg))
    out.sort(key=lambda x: x[:3])
    return out


def tempo_changes(mf):
    changes = {}
    for tick, _, _, msg in absolute_messages(mf):
        if msg.type == "set_tempo":
            changes[tick] = msg.tempo  # last at a tick wins
    changes.setdefault(0, 500000)
    return sorted(changes.items())


def seconds(tick, tempos, tpq):
    """Exact seconds of a tick as a Fraction, walking the tempo segments."""
    total = Fraction(0)
    for i, (start, us) in enumerate(tempos):
        end = tempos[i + 1][0] if i + 1 < len(tempos) else None
        if tick <= start:
            break
        span = (min(tick, end) if end is not None else tick) - start
        total += Fraction(span * us, tpq * 1_000_000)
        if end is not None and tick <= end:
            break
    return total


def decode(midi_path, mapping_path, fps=50):
    mf = mido.MidiFile(midi_path)
    tpq = mf.ticks_per_beat
    tempos = tempo_changes(mf)
    mapping = read_mapping(mapping_path)
    ons = [(tick, msg.note) for tick, _, _, msg in absolute_messages(mf)
           if msg.type == "note_on" and msg.velocity > 0 and msg.channel == 9 and msg.note in mapping]
    counts = Counter(note for _, note in ons)
    keep = {}
    for note in sorted(counts):
        d = mapping[note]
        if d not in keep or counts[note] > counts[keep[d]]:
            keep[d] = note
    kept = set(keep.values())
    frames = {}
    for tick, note in ons:
        if note in kept:
            f = math.floor(seconds(tick, tempos, tpq) * fps + Fraction(1, 2))
            frames.setdefault(f, set()).add(mapping[note])
    sigs = [(msg.numerator, msg.denominator) for _, _, _, msg in absolute_messages(mf)
            if msg.type == "time_signature"]
    end_tick = max(t for t, _, _, _ in absolute_messages(mf))
    return {
        "fps": fps,
        "frames": {f: sorted(d) for f, d in sorted(frames.items())},
        "tempos": tempos,
        "tpq": tpq,
        "end_tick": end_tick,
        "time_sigs": sigs,
        "counts": counts,
    }


def track_json(dec):
    frames = dec["frames"]
    doc = {"schema_version": 1, "fps": dec["fps"], "n_frames": (max(frames) + 1) if frames else 0,
           "frames": [[f, d] for f, d in frames.items()]}
    return json.dumps(doc, separators=(",", ":")) + "\n"


def features(dec):
    from metrics_oracle import bpm_dominant, entropy, npvi, polyphony, sig_changes

    frames = dec["frames"]
    times = [Fraction(f, dec["fps"]) for f in frames]
    iois = [b - a for a, b in zip(times, times[1:])]
    return {
        "n_drums": len({d for ds in frames.values() for d in ds}),
        "entropy": entropy([d for ds in frames.values() for d in ds]),
        "npvi": npvi(iois),
        "bpm": bpm_dominant(dec["tempos"], dec["end_tick"], dec["tpq"]),
        "polyphony_pct": polyphony([len(ds) for ds in frames.values()]),
        "time_sig_changes": sig_changes(dec["time_sigs"]),
    }


if __name__ == "__main__":
    import sys

    sys.path.insert(0, str(Path(__file__).parent))
    dec = decode(FIXTURES / "groove.mid", FIXTURES / "groove_mapping.toml")
    (FIXTURES / "groove_track.json").write_text(track_json(dec))
    feats = {"song": "groove", **features(dec)}
    (FIXTURES / "groove_features.json").write_text(json.dumps(feats, indent=2) + "\n")
    print(json.dumps(feats, indent=2))
    print("articulation counts:", sorted(dec["counts"].items()))
