# -*- coding: utf-8 -*-
"""
Experiment configuration.

An ExperimentConfig is resolved in three layers: a named preset, an optional JSON
file, then dotted command-line overrides (``train.lambda=0.5``). Every section is a
dataclass with its own ``validate()``; unknown keys are rejected by name. The JSON
key ``lambda`` maps onto the field ``lambda_``.
"""

import copy
import json
import logging
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from .augment import AugmentSpec
from .data import SynthSpec
from .errors import ConfigurationError
from .model import ModelConfig
from .training import TrainConfig

logger = logging.getLogger(__name__)

# --- Constants ---
DEFAULT_PRESET = "tuned"
PRESETS: Dict[str, dict] = {
    "tuned": {},
    "backbone-ablation": {"train": {"batch_size": 8, "weight_decay": 1e-5, "lambda": 1.0}},
}
RUN_RECORD_NAME = "run.json"
RENAMED_KEYS = {"lambda": "lambda_"}


@dataclass
class PathsConfig:
    data: Optional[str] = None
    checkpoint: Optional[str] = None
    output: Optional[str] = None

    def validate(self) -> "PathsConfig":
        return self


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    synth: SynthSpec = field(default_factory=SynthSpec)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> "ExperimentConfig":
        for f in fields(self):
            getattr(self, f.name).validate()
        if self.augment.out_size != self.model.image_size:
            raise ConfigurationError(f"augment.out_size ({self.augment.out_size}) must equal "
                                     f"model.image_size ({self.model.image_size})")
        return self

    def to_dict(self) -> dict:
        return {f.name: _section_to_dict(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        return _build(cls, raw, "")


def _section_to_dict(section) -> dict:
    out = {}
    for f in fields(section):
        value = getattr(section, f.name)
        key = next((k for k, v in RENAMED_KEYS.items() if v == f.name), f.name)
        out[key] = _section_to_dict(value) if is_dataclass(value) else copy.deepcopy(value)
    return out


def _coerce(value: Any, default: Any, where: str) -> Any:
    if is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigurationError(f"{where} must be an object, got {value!r}")
        return _build(type(default), value, where + ".")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{where} must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{where} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigurationError(f"{where} must be a list of integers, got {value!r}")
        return list(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{where} must be a string, got {value!r}")
        return value
    if value is not None and not isinstance(value, str):
        raise ConfigurationError(f"{where} must be a string or null, got {value!r}")
    return value


def _build(cls, raw: dict, prefix: str):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{prefix.rstrip('.') or 'config'} must be a JSON object")
    defaults = cls()
    names = {f.name for f in fields(cls)}
    unknown = sorted(k for k in raw if RENAMED_KEYS.get(k, k) not in names)
    if unknown:
        raise ConfigurationError(f"Unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for key, value in raw.items():
        name = RENAMED_KEYS.get(key, key)
        kwargs[name] = _coerce(value, getattr(defaults, name), prefix + key)
    return cls(**kwargs)


def _deep_merge(base: dict, update: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def read_json_file(path: Union[str, Path]) -> Any:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def parse_override_value(text: str) -> Any:
    """JSON literal when it parses as one, the bare string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: Iterable[Tuple[str, Any]]) -> dict:
    """Set ``section.field[.subfield]`` keys in a raw config dict."""
    raw = copy.deepcopy(raw)
    for dotted, value in overrides:
        parts = dotted.split(".")
        if len(parts) < 2 or not all(parts):
            raise ConfigurationError(f"Override {dotted!r} must look like section.field")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"Override {dotted!r} descends into a non-object value")
        node[parts[-1]] = value
    return raw


def load_config(path: Optional[Union[str, Path]] = None, preset: str = DEFAULT_PRESET,
                overrides: Iterable[Tuple[str, Any]] = ()) -> ExperimentConfig:
    if preset not in PRESETS:
        raise ConfigurationError(f"Unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    raw = copy.deepcopy(PRESETS[preset])
    if path is not None:
        loaded = read_json_file(path)
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{path}: top level must be a JSON object")
        raw = _deep_merge(raw, loaded)
    raw = apply_overrides(raw, overrides)
    config = ExperimentConfig.from_dict(raw)
    if "augment" not in raw or "out_size" not in raw.get("augment", {}):
        config.augment.out_size = config.model.image_size
    return config.validate()


def write_run_json(out_dir: Union[str, Path], command: str, record: dict, key: str = "-") -> Path:
    """Merge ``record`` into ``out_dir/run.json`` under ``[command][key]`` (sorted keys, no timestamps).

    ``key`` is normally the run's primary output path, so repeated runs of one
    subcommand into the same directory keep one entry each.
    """
    path = Path(out_dir) / RUN_RECORD_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    existing = {}
    if path.is_file():
        try:
            existing = json.loads(path.read_text())
        except json.JSONDecodeError:
            logger.warning("Replacing unreadable %s", path)
    existing.setdefault(command, {})[key] = record
    path.write_text(json.dumps(existing, indent=2, sort_keys=True) + "\n")
    return path
