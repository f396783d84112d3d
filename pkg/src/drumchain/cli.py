"""Command-line front end: ingest -> analyze -> perform -> score -> correlate.

Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import generate
from .complexity import FEATURE_COLUMNS, SongFeatures, song_features
from .config import ConfigError, ProjectConfig, load_config
from .evaluation import CORRELATED_FEATURES, aligned_hit_log, feature_correlations, match_events, score
from .midi_ingest import DrumTrack, MidiParseError, MidiSong, ingest, write_smf
from .planner import perform
from .reports import SCHEMA_VERSION, atomic_write, read_csv, validate, write_csv, write_json, write_jsonl
from .rhythm import build_chain, decompose
from .sim import DrumEnv, StrikeEvent

MIDI_SUFFIXES = (".mid", ".midi", ".smf")
CORRELATION_COLUMNS = ("feature", "rho", "abs_rho", "n")
SCORE_COLUMNS = ("song", "f1", "f1_std", "precision", "recall", "tp", "fp", "fn", "runs")


class CliError(Exception):
    """Runtime failure reported as one line on stderr; exit code 1."""


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _expand(paths: Sequence[str], suffixes: tuple[str, ...]) -> list[Path]:
    """Files as given, plus matching files (sorted) inside any directories."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in suffixes and q.is_file()))
        elif p.is_file():
            out.append(p)
        else:
            raise CliError(f"no such file or directory: {p}")
    if not out:
        raise CliError(f"no input files matching {', '.join(suffixes)} in {', '.join(paths)}")
    return out


def _batch_target(out: str, inputs: list[Path], given: Sequence[str], suffix: str) -> list[Path]:
    """One output per input: ``out`` itself for a single file, else ``out/<stem><suffix>``."""
    if len(inputs) == 1 and not Path(given[0]).is_dir():
        return [Path(out)]
    return [Path(out) / f"{p.stem}{suffix}" for p in inputs]


def _read_midi(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _load_track(path: Path) -> DrumTrack:
    try:
        return DrumTrack.from_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"{path}: not a drum track JSON ({exc})") from None


def _ingest_file(path: Path, cfg: ProjectConfig) -> tuple[MidiSong, DrumTrack]:
    mapping = cfg.mapping_for(path.stem)
    try:
        song, track = ingest(_read_midi(path), mapping, cfg.fps, cfg.remap_articulations)
    except MidiParseError as exc:
        raise CliError(f"{path}: {exc}") from None
    if track.n_hits == 0:
        _warn(f"{path}: no mapped percussion events; writing an empty track")
    return song, track


def _load_song_or_track(path: Path, cfg: ProjectConfig) -> tuple[MidiSong | None, DrumTrack]:
    if path.suffix.lower() in MIDI_SUFFIXES:
        return _ingest_file(path, cfg)
    return None, _load_track(path)


def _load_strikes(path: Path) -> tuple[float, list[StrikeEvent]]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return float(doc["fps"]), [StrikeEvent.from_dict(s) for s in doc["strikes"]]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"{path}: not a strike log ({exc})") from None


# -- subcommands ---------------------------------------------------------------


def cmd_ingest(args, cfg: ProjectConfig) -> None:
    inputs = _expand(args.midi, MIDI_SUFFIXES)
    for src, dst in zip(inputs, _batch_target(args.out, inputs, args.midi, ".json")):
        _, track = _ingest_file(src, cfg)
        doc = track.to_dict()
        validate(doc, "drum_track")
        atomic_write(dst, track.to_json() + "\n")  # compact canonical form
        print(f"{src}: {track.n_hits} hits, {track.duration:.3f} s -> {dst}")


def cmd_analyze(args, cfg: ProjectConfig) -> None:
    inputs = _expand(args.inputs, MIDI_SUFFIXES + (".json",))
    rows = []
    for path in inputs:
        song, track = _load_song_or_track(path, cfg)
        rows.append(song_features(song, track, build_chain(track, path.stem)).row(path.stem))
    out = Path(args.out)
    write_json(out, {"schema_version": SCHEMA_VERSION, "songs": rows}, "features")
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    write_csv(csv_path, FEATURE_COLUMNS, rows)
    print(f"{len(rows)} song(s) -> {out}, {csv_path}")


def cmd_segment(args, cfg: ProjectConfig) -> None:
    path = Path(args.track)
    _, track = _load_song_or_track(path, cfg)
    chain = build_chain(track, path.stem)
    segments = decompose(chain, cfg.segment_steps)
    doc = {"schema_version": SCHEMA_VERSION, "song": path.stem, **chain.to_dict(segments)}
    doc.pop("song_id")
    write_json(args.out, doc, "segments")
    print(f"{path}: {len(chain)} contact steps in {len(segments)} segment(s) of <= {cfg.segment_steps}")


def cmd_perform(args, cfg: ProjectConfig) -> None:
    inputs = _expand(args.tracks, MIDI_SUFFIXES + (".json",))
    kit, limits, sim = cfg.kit(), cfg.planner(), cfg.sim()
    outs = _batch_target(args.out, inputs, args.tracks, ".strikes.json")
    for src, dst in zip(inputs, outs):
        _, track = _load_song_or_track(src, cfg)
        rollout: list | None = [] if args.rollout else None
        plans: list = []
        strikes = perform(track, kit, limits, cfg.mode, sim, rollout=rollout, plan_out=plans)
        plan = plans[0]
        doc = {"schema_version": SCHEMA_VERSION, "song": src.stem, "fps": track.fps, "mode": cfg.mode,
               "seed": cfg.seed, "n_targets": len(track.hit_pairs()),
               "strikes": [s.to_dict() for s in strikes], "infeasible": plan.infeasible}
        write_json(dst, doc, "strike_log")
        if args.rollout:
            if cfg.mode != "pd":
                _warn("rollout logs come from the simulator; kinematic mode writes none")
            else:
                target = Path(args.rollout) if len(inputs) == 1 else Path(args.rollout) / f"{src.stem}.jsonl"
                write_jsonl(target, ({"schema_version": SCHEMA_VERSION, **r} for r in rollout), "rollout_record")
        if args.plan:
            target = Path(args.plan) if len(inputs) == 1 else Path(args.plan) / f"{src.stem}.plan.json"
            write_json(target, {"schema_version": SCHEMA_VERSION, **plan.to_dict(track.fps)}, "plan")
        print(f"{src}: {len(strikes)} strikes for {doc['n_targets']} targets ({cfg.mode}) -> {dst}")


def _score_runs(track: DrumTrack, logs: list[Path], tol: int) -> dict:
    runs = []
    for path in logs:
        fps, strikes = _load_strikes(path)
        try:
            m = match_events(track, strikes, tol, strike_fps=fps)
        except ValueError as exc:
            raise CliError(f"{path}: {exc}") from None
        runs.append({"strikes": str(path), "score": score(m).to_dict(),
                     "hit_log": aligned_hit_log(track, strikes)})
    f1 = np.array([r["score"]["f1"] for r in runs])
    return {"schema_version": SCHEMA_VERSION, "tolerance": tol, "runs": runs,
            "f1_mean": float(f1.mean()), "f1_std": float(f1.std())}


def _score_row(song: str, report: dict) -> dict:
    runs = report["runs"]
    mean = {k: float(np.mean([r["score"][k] for r in runs])) for k in ("precision", "recall")}
    tot = {k: sum(r["score"][k] for r in runs) for k in ("tp", "fp", "fn")}
    return {"song": song, "f1": report["f1_mean"], "f1_std": report["f1_std"], **mean, **tot, "runs": len(runs)}


def cmd_score(args, cfg: ProjectConfig) -> None:
    track_path = Path(args.track)
    rows = []
    if track_path.is_dir():
        # batch over songs: pair <stem>.json tracks with <stem>.strikes.json logs
        if len(args.strikes) != 1 or not Path(args.strikes[0]).is_dir():
            raise CliError("a track directory needs exactly one strike-log directory")
        log_dir = Path(args.strikes[0])
        tracks = [p for p in _expand([args.track], (".json",)) if not p.name.endswith(".strikes.json")]
        missing = [p.stem for p in tracks if not (log_dir / f"{p.stem}.strikes.json").is_file()]
        if missing:
            raise CliError(f"no strike log for: {', '.join(missing)}")
        for p in tracks:
            report = _score_runs(_load_track(p), [log_dir / f"{p.stem}.strikes.json"], cfg.tolerance)
            write_json(Path(args.out) / f"{p.stem}.score.json", report, "score_report")
            rows.append(_score_row(p.stem, report))
    else:
        _, track = _load_song_or_track(track_path, cfg)
        report = _score_runs(track, [Path(s) for s in args.strikes], cfg.tolerance)
        write_json(args.out, report, "score_report")
        rows.append(_score_row(track_path.stem, report))
    if args.scores_csv:
        write_csv(args.scores_csv, SCORE_COLUMNS, rows)
    for row in rows:
        print(f"{row['song']}: F1 {row['f1']:.4f} +- {row['f1_std']:.4f} over {row['runs']} run(s), "
              f"P {row['precision']:.4f} R {row['recall']:.4f}")


def _float_or_none(text: str | None) -> float | None:
    if text is None or text.strip() == "":
        return None
    v = float(text)
    return None if math.isnan(v) else v


def cmd_correlate(args, cfg: ProjectConfig) -> None:
    feats = {r["song"]: r for r in read_csv(args.features)}
    scores = {r["song"]: r for r in read_csv(args.scores)}
    common = sorted(set(feats) & set(scores))
    unmatched = {"features_only": sorted(set(feats) - set(scores)),
                 "scores_only": sorted(set(scores) - set(feats))}
    if not common:
        raise CliError("no song ids in common between "
                       f"{args.features} ({len(feats)}) and {args.scores} ({len(scores)})")
    for side, ids in unmatched.items():
        if ids:
            _warn(f"{side.replace('_', ' ')}: {', '.join(ids)}")

    features = [SongFeatures(**{k: _float_or_none(feats[s][k]) for k in CORRELATED_FEATURES}) for s in common]
    f1 = [float(scores[s]["f1"]) for s in common]
    table = feature_correlations(features, f1)
    rows = [{"feature": r.feature, "rho": r.rho, "abs_rho": r.abs_rho, "n": r.n} for r in table.values()]
    scatter = {name: [{"song": s, "x": getattr(f, name), "f1": y}
                      for s, f, y in zip(common, features, f1) if getattr(f, name) is not None]
               for name in CORRELATED_FEATURES}
    doc = {"schema_version": SCHEMA_VERSION, "n_songs": len(common), "unmatched": unmatched,
           "rows": rows, "scatter": scatter}
    out = Path(args.out)
    write_json(out, doc, "correlation")
    write_csv(Path(args.csv) if args.csv else out.with_suffix(".csv"), CORRELATION_COLUMNS, rows)
    for r in sorted(rows, key=lambda r: -(r["abs_rho"] or 0)):
        rho = "undefined" if r["rho"] is None else f"{r['rho']:+.3f}"
        print(f"{r['feature']:>18}: rho {rho} (n={r['n']})")


def cmd_env_demo(args, cfg: ProjectConfig) -> None:
    path = Path(args.track)
    _, track = _load_song_or_track(path, cfg)
    env = DrumEnv(track, cfg.kit(), cfg.sim(), cfg.reward(), record=True)
    rng = np.random.default_rng(cfg.seed)
    segment = None
    if args.segment is not None:
        segments = decompose(build_chain(track, path.stem), cfg.segment_steps)
        if not 0 <= args.segment < len(segments):
            raise CliError(f"segment {args.segment} out of range (track has {len(segments)})")
        segment = segments[args.segment]
    env.reset(segment, "msi" if args.msi else "start", rng)
    done, n = env.done, 0
    while not done and (args.frames is None or n < args.frames):
        a = np.zeros(env.config.n) if args.policy == "zero" else rng.uniform(-1, 1, env.config.n)
        *_, done = env.step(a)
        n += 1
    records = [{"schema_version": SCHEMA_VERSION, **r} for r in env.log]
    if args.out:
        write_jsonl(args.out, records, "rollout_record")
        print(f"{n} frames -> {args.out}")
    else:
        for r in records:
            print(json.dumps(r, separators=(",", ":")))


def cmd_generate(args, cfg: ProjectConfig) -> None:
    if args.kind == "iso":
        songs = [generate.isochronous(args.drums or 2, args.bpm or 120, args.seconds, fps=cfg.fps)]
    elif args.kind == "sweep":
        songs = generate.sweep_suite(seed=cfg.seed, fps=cfg.fps)
    else:
        songs = [generate.polyphonic(args.drums or 3, args.bpm or 90, fps=cfg.fps)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for g in songs:
        atomic_write(out / f"{g.song_id}.mid", write_smf(g.song))
    print(f"{len(songs)} song(s) -> {out}")


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="project TOML config")
    common.add_argument("--seed", type=int, help="seed for all randomness (default 0)")
    common.add_argument("--fps", type=float, help="frame rate of the drum grid (default 50)")

    p = argparse.ArgumentParser(prog="drumchain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="MIDI file(s) -> drum track JSON")
    s.add_argument("midi", nargs="+", help="SMF files or directories")
    s.add_argument("-o", "--out", required=True, help="output file, or directory for several inputs")
    s.add_argument("--mapping", help="TOML note->drum mapping")
    s.add_argument("--remap-articulations", action="store_true", default=None,
                   help="remap minority articulations instead of dropping them")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("analyze", parents=[common], help="complexity features per song")
    s.add_argument("inputs", nargs="+", help="MIDI files, track JSON files or directories")
    s.add_argument("-o", "--out", required=True, help="features JSON")
    s.add_argument("--csv", help="features CSV (default: next to --out)")
    s.add_argument("--mapping", help="TOML note->drum mapping for MIDI inputs")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("segment", parents=[common], help="contact chain and fixed-size segments")
    s.add_argument("track")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("-P", "--segment-steps", type=int, help="contact steps per segment (default 32)")
    s.add_argument("--mapping")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("perform", parents=[common], help="play tracks with the baseline planner")
    s.add_argument("tracks", nargs="+")
    s.add_argument("-o", "--out", required=True, help="strike log, or directory for several inputs")
    s.add_argument("--mode", choices=("kinematic", "pd"))
    s.add_argument("--rollout", help="JSON-lines rollout log (pd mode)")
    s.add_argument("--plan", help="export the stick plan as JSON")
    s.add_argument("--mapping")
    s.set_defaults(func=cmd_perform)

    s = sub.add_parser("score", parents=[common], help="P/R/F1 of strike logs against a track")
    s.add_argument("track", help="track (or MIDI) file, or a directory of tracks")
    s.add_argument("strikes", nargs="+", help="strike logs (several = batch), or one directory")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--tolerance", type=int, help="match window in frames (default 1)")
    s.add_argument("--scores-csv", help="write song,f1,... rows for correlate")
    s.add_argument("--mapping")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("correlate", parents=[common], help="Spearman rho of features vs F1")
    s.add_argument("features", help="features CSV from analyze")
    s.add_argument("scores", help="scores CSV from score --scores-csv")
    s.add_argument("-o", "--out", required=True, help="correlation JSON with scatter data")
    s.add_argument("--csv", help="rho table CSV (default: next to --out)")
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("env-demo", parents=[common], help="step the environment with a fixed policy")
    s.add_argument("track")
    s.add_argument("--policy", choices=("zero", "random"), default="zero")
    s.add_argument("--frames", type=int, help="stop after this many frames")
    s.add_argument("--segment", type=int, help="run one segment instead of the whole track")
    s.add_argument("--msi", action="store_true", help="start at a random step inside the segment")
    s.add_argument("-o", "--out", help="JSON-lines file (default: stdout)")
    s.add_argument("-P", "--segment-steps", type=int)
    s.add_argument("--mapping")
    s.set_defaults(func=cmd_env_demo)

    s = sub.add_parser("generate", parents=[common], help="write synthetic MIDI songs")
    s.add_argument("kind", choices=("iso", "sweep", "poly"))
    s.add_argument("-o", "--out", required=True, help="output directory")
    s.add_argument("--drums", type=int)
    s.add_argument("--bpm", type=float)
    s.add_argument("--seconds", type=float, default=60)
    s.set_defaults(func=cmd_generate)
    return p


def _resolve_config(args) -> ProjectConfig:
    cfg = load_config(args.config)
    mapping = getattr(args, "mapping", None)
    if mapping is not None:
        mapping = Path(mapping)
        if not mapping.is_file():
            raise ConfigError(f"mapping file not found: {mapping}")
    return cfg.with_overrides(
        seed=args.seed, fps=args.fps, mapping_path=mapping,
        song_mappings={} if mapping is not None else None,
        segment_steps=getattr(args, "segment_steps", None),
        tolerance=getattr(args, "tolerance", None),
        mode=getattr(args, "mode", None),
        remap_articulations=getattr(args, "remap_articulations", None),
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CliError, jsonschema.ValidationError, OSError, ValueError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
