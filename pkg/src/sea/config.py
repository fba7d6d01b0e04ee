"""Run-configuration files: JSON with a fixed schema, unknown keys rejected.

A silent typo in a hyperparameter name is the main reproducibility hazard,
so parsing is strict.  The environment variable SEA_SEED supplies a seed only
when neither the file nor the command line sets one.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

from .errors import ConfigError
from .trainer import TrainConfig

# JSON key -> TrainConfig field
_FIELD_ALIASES = {"lambda": "lambda_weight"}
_PATH_KEYS = ("corpus", "out", "labels")


def _train_field_names():
    return {f.name for f in dataclasses.fields(TrainConfig)}


def env_seed() -> int | None:
    raw = os.environ.get("SEA_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"SEA_SEED must be an integer, got {raw!r}") from exc


def load_pretrain_config(path) -> tuple:
    """Parse a pretrain config file into (TrainConfig, {path keys})."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    allowed = _train_field_names()
    paths = {}
    fields = {}
    for key, value in data.items():
        if key in _PATH_KEYS:
            paths[key] = value
            continue
        name = _FIELD_ALIASES.get(key, key)
        if name not in allowed:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        fields[name] = value
    if "corpus" not in paths or "out" not in paths:
        raise ConfigError(f"{path}: config must set 'corpus' and 'out'")
    if "seed" not in fields:
        fallback = env_seed()
        if fallback is not None:
            fields["seed"] = fallback
    if "d_h" in fields and fields["d_h"] is not None:
        fields["d_h"] = int(fields["d_h"])
    try:
        config = TrainConfig(**fields)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config, paths


def resolved_config_dict(config: TrainConfig, paths: dict | None = None) -> dict:
    """Every effective setting, defaults included, for self-describing logs."""
    out = dict(paths or {})
    out.update(dataclasses.asdict(config))
    return out
