"""TOML experiment configs with ``scenario`` / ``train`` / ``schedule`` / ``campaign`` tables.

Any key left out falls back to the dataclass default. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .env_mpe import WorldConfig
from .errors import ConfigError
from .harness import ExperimentConfig, Variant
from .maddpg import TrainConfig
from .sharing import ShareSchedule

_SECTIONS = {"scenario", "train", "schedule", "campaign"}
_CAMPAIGN_KEYS = {"seeds", "smoothing_window", "tolerance_fraction", "variants"}


def _build(cls, values: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def parse_config(data: dict, out_dir: str | None = None) -> ExperimentConfig:
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    env = _build(WorldConfig, dict(data.get("scenario", {})), "scenario")
    train_raw = dict(data.get("train", {}))
    episodes = train_raw.pop("episodes", 4000)
    train = _build(TrainConfig, train_raw, "train")
    base_sched = dict(data.get("schedule", {}))
    _build(ShareSchedule, base_sched, "schedule")

    camp = dict(data.get("campaign", {}))
    bad = set(camp) - _CAMPAIGN_KEYS
    if bad:
        raise ConfigError(f"[campaign] unknown keys: {sorted(bad)}")
    variants = []
    for raw in camp.get("variants", []):
        raw = dict(raw)
        name = raw.pop("name", None)
        sched = _build(ShareSchedule, {**base_sched, **raw}, "campaign.variants")
        variants.append(Variant(name or sched.label, sched))
    if not variants:
        sched = _build(ShareSchedule, base_sched, "schedule")
        variants.append(Variant(sched.label, sched))
    kwargs = {k: camp[k] for k in ("seeds", "smoothing_window", "tolerance_fraction") if k in camp}
    if not isinstance(episodes, int):
        raise ConfigError("[train] episodes must be an integer")
    return ExperimentConfig(env=env, train=train, variants=variants, episodes=episodes,
                            out_dir=out_dir or "runs", **kwargs)


def load_config(path, out_dir: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, out_dir)
