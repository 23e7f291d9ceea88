"""TOML/JSON configuration files.

A config file may hold three tables, all optional::

    [dataset]   # DatasetSpec fields (simulate)
    [system]    # SystemConfig fields; [system.stft] for the STFT
    [train]     # TrainConfig fields other than ``system``

Unknown keys are errors, so typos do not pass silently.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .simulate import DatasetSpec, SimulationError
from .system import ConfigError, SystemConfig
from .train import TrainConfig

__all__ = ["ConfigError", "load_config", "dataset_spec", "system_config", "train_config"]

SECTIONS = ("dataset", "system", "train")


def load_config(path) -> dict:
    """Parse a .toml or .json file into a dict of sections."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a table at the top level")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections in {path}: {sorted(unknown)}")
    return data


def dataset_spec(cfg: dict, **overrides) -> DatasetSpec:
    d = dict(cfg.get("dataset", {}))
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return DatasetSpec.from_dict(d)
    except (SimulationError, TypeError) as exc:
        raise ConfigError(f"invalid [dataset] section: {exc}") from exc


def system_config(cfg: dict) -> SystemConfig:
    try:
        return SystemConfig.from_dict(dict(cfg.get("system", {})))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [system] section: {exc}") from exc


def train_config(cfg: dict, **overrides) -> TrainConfig:
    d = dict(cfg.get("train", {}))
    if "system" in d:
        raise ConfigError("put system settings in the [system] table, not [train]")
    d.update({k: v for k, v in overrides.items() if v is not None})
    d["system"] = system_config(cfg)
    try:
        return TrainConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [train] section: {exc}") from exc
