"""Project configuration loaded from TOML.

Precedence is flags > config file > built-in defaults. Relative paths in a
config file resolve against the file's own directory.

Example::

    fps = 50
    lookahead = 20
    segment_steps = 32
    tolerance = 1
    seed = 0
    mode = "pd"
    output_dir = "out"
    mapping = "kit_mapping.toml"      # [mapping] table, note = "drum name"
    kit_layout = "kit_layout.toml"    # [kit] table, see DrumKitLayout.from_mapping

    [song_mappings]                   # per-song mapping files, keyed by file stem
    groove = "groove_mapping.toml"

    [reward]
    w_missed = -2.0

    [sim]
    kp = 100.0

    [planner]
    v_max = 3.0

    [kit."snare"]                     # inline kit overrides, applied after kit_layout
    radius = 0.13
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .midi_ingest import DEFAULT_FPS, DrumMapping, load_mapping
from .planner import PlannerLimits
from .reward import RewardWeights
from .rhythm import DEFAULT_LOOKAHEAD, DEFAULT_SEGMENT_STEPS
from .sim import DrumKitLayout, SimConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MODES = ("kinematic", "pd")
_TOP_LEVEL = {"fps", "lookahead", "segment_steps", "tolerance", "seed", "mode", "output_dir", "mapping",
              "kit_layout", "song_mappings", "reward", "sim", "planner", "kit", "remap_articulations"}


class ConfigError(ValueError):
    """Invalid or unreadable configuration; maps to exit code 2."""


def _check_range(name: str, value, lo, hi, integer: bool = False):
    if integer and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not lo <= value <= hi:
        raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")


def _existing(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


@dataclass(frozen=True)
class ProjectConfig:
    fps: float = DEFAULT_FPS
    lookahead: int = DEFAULT_LOOKAHEAD
    segment_steps: int = DEFAULT_SEGMENT_STEPS
    tolerance: int = 1
    seed: int = 0
    mode: str = "kinematic"
    output_dir: Path = Path(".")
    mapping_path: Path | None = None
    song_mappings: Mapping[str, Path] = field(default_factory=dict)
    kit_path: Path | None = None
    remap_articulations: bool = False
    reward_table: Mapping[str, Any] = field(default_factory=dict)
    sim_table: Mapping[str, Any] = field(default_factory=dict)
    planner_table: Mapping[str, Any] = field(default_factory=dict)
    kit_table: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _check_range("fps", self.fps, 1, 1000)
        _check_range("lookahead", self.lookahead, 0, 10_000, integer=True)
        _check_range("segment_steps", self.segment_steps, 1, 10**9, integer=True)
        _check_range("tolerance", self.tolerance, 0, 1000, integer=True)
        _check_range("seed", self.seed, 0, 2**63 - 1, integer=True)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mapping_path is not None:
            _existing(self.mapping_path, "mapping file")
        for p in self.song_mappings.values():
            _existing(p, "mapping file")
        if self.kit_path is not None:
            _existing(self.kit_path, "kit layout file")
        # build every component once so bad values fail at load time
        self.reward()
        self.sim()
        self.planner()
        self.kit()

    def reward(self) -> RewardWeights:
        try:
            return RewardWeights.from_mapping(self.reward_table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[reward]: {exc}") from None

    def sim(self) -> SimConfig:
        known = {f.name for f in fields(SimConfig)} - {"control_fps", "lookahead"}
        unknown = set(self.sim_table) - known
        if unknown:
            raise ConfigError(f"[sim]: unknown keys {sorted(unknown)}")
        try:
            return SimConfig.from_mapping({**self.sim_table, "control_fps": self.fps, "lookahead": self.lookahead})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[sim]: {exc}") from None

    def planner(self) -> PlannerLimits:
        try:
            return PlannerLimits(**self.planner_table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[planner]: {exc}") from None

    def kit(self) -> DrumKitLayout:
        table: dict[str, Any] = {}
        if self.kit_path is not None:
            doc = _read_toml(self.kit_path)
            if "kit" not in doc:
                raise ConfigError(f"{self.kit_path}: missing [kit] table")
            table.update(doc["kit"])
        for name, spec in self.kit_table.items():
            table[name] = {**table.get(name, {}), **spec}
        try:
            return DrumKitLayout.from_mapping(table)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"kit layout: {exc}") from None

    def mapping_for(self, song_stem: str | None = None) -> DrumMapping:
        path = self.song_mappings.get(song_stem) if song_stem else None
        path = path or self.mapping_path
        if path is None:
            return DrumMapping.general_midi()
        try:
            return load_mapping(_existing(Path(path), "mapping file"))
        except ConfigError:
            raise
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def with_overrides(self, **flags) -> "ProjectConfig":
        """Apply command-line values; ``None`` means the flag was not given."""
        given = {k: v for k, v in flags.items() if v is not None}
        try:
            return replace(self, **given)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path: str | Path | None = None) -> ProjectConfig:
    """Read a project config; ``None`` gives the defaults."""
    if path is None:
        return ProjectConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    doc = _read_toml(path)
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    base = path.parent

    def resolve(p):
        return None if p is None else (base / p)

    kwargs: dict[str, Any] = {k: doc[k] for k in ("fps", "lookahead", "segment_steps", "tolerance", "seed",
                                                  "mode", "remap_articulations") if k in doc}
    if "output_dir" in doc:
        kwargs["output_dir"] = resolve(doc["output_dir"])
    kwargs["mapping_path"] = resolve(doc.get("mapping"))
    kwargs["kit_path"] = resolve(doc.get("kit_layout"))
    kwargs["song_mappings"] = {k: resolve(v) for k, v in doc.get("song_mappings", {}).items()}
    for key, attr in (("reward", "reward_table"), ("sim", "sim_table"), ("planner", "planner_table"),
                      ("kit", "kit_table")):
        if key in doc:
            if not isinstance(doc[key], dict):
                raise ConfigError(f"{path}: [{key}] must be a table")
            kwargs[attr] = doc[key]
    return ProjectConfig(**kwargs)
