"""JSON run-configuration file handling.

A config file may override any subset of the four sections; unknown keys
are rejected so typos fail loudly:

    {
      "train":    { ... TrainConfig fields ... },
      "schedule": {"seed_frac": 0.04, "step_frac": 0.01, "cap_frac": 0.10},
      "oracle":   {"votes_per_label": 42, "threshold": 0.5},
      "split":    {"fractions": [0.8, 0.1, 0.1], "seed": 0}
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from morphal.aae import TrainConfig
from morphal.errors import ConfigError, DataFormatError


@dataclass
class ScheduleSettings:
    seed_frac: float = 0.04
    step_frac: float = 0.01
    cap_frac: float = 0.10


@dataclass
class OracleSettings:
    votes_per_label: int = 42
    threshold: float = 0.5


@dataclass
class SplitSettings:
    fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        self.fractions = tuple(self.fractions)


@dataclass
class RunSettings:
    train: TrainConfig = field(default_factory=TrainConfig)
    schedule: ScheduleSettings = field(default_factory=ScheduleSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    split: SplitSettings = field(default_factory=SplitSettings)


_SECTIONS = {
    "train": TrainConfig,
    "schedule": ScheduleSettings,
    "oracle": OracleSettings,
    "split": SplitSettings,
}


def _build_section(cls, overrides: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    return cls(**overrides)


def load_settings(path=None) -> RunSettings:
    """Defaults, with any sections overridden by the JSON file at path."""
    if path is None:
        return RunSettings()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be an object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: section {name!r} must be an object")
        parts[name] = _build_section(cls, section, f"{path}:{name}")
    return RunSettings(**parts)


def settings_to_json(settings: RunSettings) -> str:
    return json.dumps({name: asdict(getattr(settings, name))
                       for name in _SECTIONS}, indent=2)
