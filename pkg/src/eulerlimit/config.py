"""YAML configuration files for the command-line tools."""

from __future__ import annotations

from pathlib import Path

import yaml

from .errors import ConfigError
from .sweep import SweepConfig

INIT_STATS_KEYS = {"d", "N_list", "trials", "seed", "epsilon", "output", "lattice"}


def load_mapping(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_sweep_config(path) -> SweepConfig:
    try:
        return SweepConfig.from_dict(load_mapping(path))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_init_stats_config(path) -> dict:
    raw = load_mapping(path)
    extra = set(raw) - INIT_STATS_KEYS
    if extra:
        raise ConfigError(f"unknown keys in config: {sorted(extra)}")
    for key in ("d", "N_list"):
        if key not in raw:
            raise ConfigError(f"missing config key {key!r}")
    out = {
        "d": raw["d"],
        "N_list": raw["N_list"],
        "trials": raw.get("trials", 64),
        "seed": raw.get("seed", 0),
        "epsilon": raw.get("epsilon", 1.0),
        "output": raw.get("output"),
        "lattice": raw.get("lattice", True),
    }
    if out["d"] not in (2, 3) or isinstance(out["d"], bool):
        raise ConfigError("d must be 2 or 3")
    ns = out["N_list"]
    if not isinstance(ns, list) or any(isinstance(n, bool) or not isinstance(n, int) or n < 2 for n in ns):
        raise ConfigError("N_list must be a list of integers >= 2")
    for key in ("trials", "seed"):
        v = out[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError(f"{key} must be a non-negative integer")
    if out["trials"] < 2:
        raise ConfigError("trials must be at least 2")
    if isinstance(out["epsilon"], bool) or not isinstance(out["epsilon"], (int, float)) or out["epsilon"] <= 0:
        raise ConfigError("epsilon must be a positive number")
    if not isinstance(out["lattice"], bool):
        raise ConfigError("lattice must be true or false")
    return out
