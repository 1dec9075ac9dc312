"""Run configuration: one JSON tree merging every tunable of the pipeline.

Layout::

    {
      "synth": {...SynthSpec fields...},
      "model": {...ModelConfig fields...},
      "train": {...TrainConfig fields...},
      "paths": {"data": ..., "out": ..., "cache": ...},
      "buckets": 5,
      "k": 2
    }

Every section and key is optional; missing values take their defaults.
Unknown keys are rejected.  Any field can be overridden with a dotted
``section.field=value`` assignment whose value is parsed as JSON when
possible (``model.d0=64``, ``train.ratios=[50,25,25]``) and kept as a
string otherwise (``model.variant=no_ag``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional

from .hin.synth import SynthSpec
from .model.config import ModelConfig
from .train.trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    data: str = "data/synth"
    out: str = "runs"
    cache: str = "cache"


SECTIONS = {"synth": SynthSpec, "model": ModelConfig, "train": TrainConfig, "paths": Paths}
SCALARS = {"buckets": 5, "k": 2}


@dataclass
class RunConfig:
    synth: SynthSpec = field(default_factory=SynthSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: Paths = field(default_factory=Paths)
    # number of disparity buckets and hop radius of the neighborhood
    buckets: int = 5
    k: int = 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"]["ratios"] = list(self.train.ratios)
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        try:
            self.synth.validate()
            self.model.validate()
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.buckets < 2:
            raise ConfigError("buckets must be >= 2")
        if self.k < 1:
            raise ConfigError("k must be >= 1")


def field_names(section: str) -> list[str]:
    return [f.name for f in fields(SECTIONS[section])]


def all_keys() -> list[str]:
    """Every dotted key accepted by :func:`apply_override`."""
    keys = [f"{s}.{n}" for s in SECTIONS for n in field_names(s)]
    return keys + list(SCALARS)


def _coerce(key: str, value, default):
    """Check ``value`` against the type of ``default`` (ints accepted for floats)."""
    if default is None:
        if value is None or isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected an integer or null, got {value!r}")
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, (list, tuple)):
        if isinstance(value, (list, tuple)):
            return type(default)(value)
    raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}")


def _set(cfg: RunConfig, key: str, value) -> None:
    parts = key.split(".")
    if len(parts) == 1 and parts[0] in SCALARS:
        setattr(cfg, parts[0], _coerce(key, value, SCALARS[parts[0]]))
        return
    if len(parts) != 2 or parts[0] not in SECTIONS:
        raise ConfigError(f"unknown config key {key!r}")
    section, name = parts
    if name not in field_names(section):
        raise ConfigError(f"unknown config key {key!r}")
    target = getattr(cfg, section)
    setattr(target, name, _coerce(key, value, getattr(SECTIONS[section](), name)))


def from_dict(tree: dict) -> RunConfig:
    if not isinstance(tree, dict):
        raise ConfigError("config root must be an object")
    cfg = RunConfig()
    for top, value in tree.items():
        if top in SCALARS:
            _set(cfg, top, value)
        elif top in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {top!r} must be an object")
            for name, v in value.items():
                _set(cfg, f"{top}.{name}", v)
        else:
            raise ConfigError(f"unknown config key {top!r}")
    return cfg


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: RunConfig, assignment: str) -> None:
    """Apply one ``section.field=value`` assignment in place."""
    key, sep, text = assignment.partition("=")
    if not sep:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    _set(cfg, key.strip(), parse_value(text))


def load_run_config(path: Optional[str | Path] = None,
                    overrides: Iterable[str] = ()) -> RunConfig:
    """Read ``path`` (if any), apply dotted overrides in order, validate."""
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            tree = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
        cfg = from_dict(tree)
    else:
        cfg = RunConfig()
    for item in overrides:
        apply_override(cfg, item)
    cfg.validate()
    return cfg
