"""JSON/CSV output: schemas, validation and write-then-rename."""
from __future__ import annotations

import csv
import functools
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import jsonschema

SCHEMA_VERSION = 1

_NUM_OR_NULL = {"type": ["number", "null"]}
_INT_OR_NULL = {"type": ["integer", "null"]}
_DRUM = {"type": "integer", "minimum": 0, "maximum": 5}
_STRIKE = {
    "type": "object",
    "required": ["frame", "drum", "stick", "impact_speed"],
    "properties": {"frame": {"type": "integer"}, "drum": _DRUM, "stick": {"enum": ["L", "R"]},
                   "impact_speed": {"type": "number"}},
}
_COUNTS = {
    "type": "object",
    "required": ["tp", "fp", "fn", "precision", "recall", "f1"],
    "properties": {k: {"type": "integer", "minimum": 0} for k in ("tp", "fp", "fn")}
    | {k: {"type": "number", "minimum": 0, "maximum": 1} for k in ("precision", "recall", "f1")},
}


def _doc(required: Mapping[str, dict]) -> dict:
    props = {"schema_version": {"const": SCHEMA_VERSION}, **required}
    return {"type": "object", "required": list(props), "properties": props}


SCHEMAS: dict[str, dict] = {
    "drum_track": _doc({
        "fps": {"type": "number", "exclusiveMinimum": 0},
        "n_frames": {"type": "integer", "minimum": 0},
        "frames": {"type": "array", "items": {
            "type": "array", "minItems": 2, "maxItems": 2,
            "prefixItems": [{"type": "integer", "minimum": 0}, {"type": "array", "items": _DRUM, "minItems": 1}],
        }},
    }),
    "features": _doc({"songs": {"type": "array", "items": {
        "type": "object",
        "required": ["song", "n_drums", "entropy", "npvi", "bpm", "polyphony_pct", "time_sig_changes"],
        "properties": {"song": {"type": "string"}, "n_drums": {"type": "integer", "minimum": 0},
                       "entropy": _NUM_OR_NULL, "npvi": _NUM_OR_NULL, "bpm": _NUM_OR_NULL,
                       "polyphony_pct": _NUM_OR_NULL, "time_sig_changes": _INT_OR_NULL},
    }}}),
    "segments": _doc({"song": {"type": "string"}, "fps": {"type": "number"}, "steps": {"type": "array"},
                      "segments": {"type": "array"}}),
    "strike_log": _doc({"song": {"type": "string"}, "fps": {"type": "number"}, "mode": {"enum": ["kinematic", "pd"]},
                        "strikes": {"type": "array", "items": _STRIKE}}),
    "score_report": _doc({"tolerance": {"type": "integer", "minimum": 0}, "runs": {"type": "array", "items": {
        "type": "object", "required": ["strikes", "score", "hit_log"],
        "properties": {"score": _COUNTS},
    }}, "f1_mean": {"type": "number"}, "f1_std": {"type": "number"}}),
    "correlation": _doc({"n_songs": {"type": "integer", "minimum": 1}, "unmatched": {"type": "object"},
                         "rows": {"type": "array"}, "scatter": {"type": "object"}}),
    "plan": _doc({"strikes": {"type": "array"}, "infeasible": {"type": "array"},
                  "waypoints": {"type": "array"}}),
    "rollout_record": _doc({"frame": {"type": "integer"}, "q": {"type": "array"}, "targets": {"type": "array"},
                            "strikes": {"type": "array", "items": _STRIKE}, "reward": {"type": "object"}}),
}


@functools.lru_cache(maxsize=None)
def _validator(schema: str) -> jsonschema.Draft202012Validator:
    jsonschema.Draft202012Validator.check_schema(SCHEMAS[schema])
    return jsonschema.Draft202012Validator(SCHEMAS[schema])


def validate(doc, schema: str) -> None:
    """Raise ``jsonschema.ValidationError`` when ``doc`` does not fit the schema."""
    error = jsonschema.exceptions.best_match(_validator(schema).iter_errors(doc))
    if error is not None:
        raise error


def atomic_write(path: str | Path, data: str | bytes) -> None:
    """Write to a sibling temp file then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def write_json(path: str | Path, doc: Mapping, schema: str) -> None:
    validate(doc, schema)
    atomic_write(path, dumps(doc))


def write_jsonl(path: str | Path, records: Iterable[Mapping], schema: str) -> None:
    lines = []
    for rec in records:
        validate(rec, schema)
        lines.append(json.dumps(rec, separators=(",", ":")))
    atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def csv_text(columns: Sequence[str], rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if row.get(k) is None else row[k]) for k in columns})
    return buf.getvalue()


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Mapping]) -> None:
    atomic_write(path, csv_text(columns, rows))


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
