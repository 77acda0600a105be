"""Flat key=value configuration files.

Format: one `key = value` pair per line; `#` starts a comment; blank lines
ignored. Values are parsed as bool/int/float when they look like one,
comma-separated lists become tuples, everything else stays a string.
"""

from __future__ import annotations

from dataclasses import fields

from .trainer import ScenarioConfig, TrainerConfig, default_trainer_config


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(_parse_scalar(p.strip()) for p in text.split(",") if p.strip() != "")
    return _parse_scalar(text)


def load_kv_config(path) -> dict:
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = parse_value(value)
    return out


_SCENARIO_KEYS = {f.name for f in fields(ScenarioConfig)} - {"trainer"}
_TRAINER_KEYS = {f.name for f in fields(TrainerConfig)}


def scenario_from_dict(cfg: dict) -> ScenarioConfig:
    """Build a scenario from flat keys; trainer fields override the per-
    algorithm/variant defaults."""
    unknown = set(cfg) - _SCENARIO_KEYS - _TRAINER_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    scen_kwargs = {}
    for key in _SCENARIO_KEYS & set(cfg):
        value = cfg[key]
        if key in ("train_scene_seeds", "eval_scene_seeds") and isinstance(value, int):
            value = (value,)
        scen_kwargs[key] = value
    scenario = ScenarioConfig(**scen_kwargs)
    trainer = default_trainer_config(scenario.algorithm, scenario.variant)
    overrides = {k: cfg[k] for k in _TRAINER_KEYS & set(cfg)}
    if overrides:
        from dataclasses import replace
        trainer = replace(trainer, **overrides)
    scenario.trainer = trainer
    return scenario


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_dict(load_kv_config(path))
