"""Experiment configuration: one YAML file, every constant overridable."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from safesep.doda import MODES, DODAConfig
from safesep.errors import ConfigError
from safesep.ppo import PPOConfig
from safesep.sim.airspace import CASE_IDS
from safesep.sim.world import SimConfig

DENSITIES = {
    "default": (180.0, 360.0),
    "high": (156.0, 180.0),
    "low": (360.0, 600.0),
}


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    doda: DODAConfig = field(default_factory=DODAConfig)
    hidden: tuple[int, int] = (32, 32)
    train_case: str = "A"
    train_density: str = "default"
    train_episodes: int = 3000
    episodes_per_update: int = 4
    rolling_window: int = 50
    eval_cases: tuple[str, ...] = ("B", "C", "D")
    modes: tuple[str, ...] = MODES
    eval_episodes: int = 50
    densities: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DENSITIES))
    geometry: str | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.eval_cases = tuple(self.eval_cases)
        self.modes = tuple(self.modes)
        self.densities = {k: tuple(float(x) for x in v) for k, v in self.densities.items()}
        for c in (self.train_case, *self.eval_cases):
            if c not in CASE_IDS:
                raise ConfigError(f"unknown case {c!r}")
        for m in self.modes:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}")
        for name, (lo, hi) in self.densities.items():
            if not 0 < lo <= hi:
                raise ConfigError(f"density {name}: bad interval {(lo, hi)}")
        if self.train_density not in self.densities:
            raise ConfigError(f"unknown density {self.train_density!r}")
        if self.train_episodes < 0 or self.episodes_per_update < 1 or self.eval_episodes < 1:
            raise ConfigError("episode counts must be positive")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ConfigError("hidden must be two positive sizes")

    def interval(self, density: str) -> tuple[float, float]:
        try:
            return self.densities[density]
        except KeyError:
            raise ConfigError(f"unknown density {density!r}") from None

    def sim_for(self, density: str) -> SimConfig:
        return dataclasses.replace(self.sim, interval_s=self.interval(density))

    def layer_sizes(self) -> tuple[int, int, int]:
        return (self.sim.obs_dim, *self.hidden)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {"sim": SimConfig, "ppo": PPOConfig, "doda": DODAConfig}


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    kwargs = {}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            names = {f.name for f in dataclasses.fields(cls)}
            bad = set(value or {}) - names
            if bad:
                raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
            kwargs[key] = cls(**(value or {}))
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def default_config_text() -> str:
    return resources.files("safesep.data").joinpath("default_config.yaml").read_text()


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults from the packaged file, then ``path``, then ``overrides`` (deep-merged)."""
    merged = yaml.safe_load(default_config_text()) or {}
    if path is not None:
        try:
            with open(path) as fh:
                user = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        merged = _deep_merge(merged, user)
    if overrides:
        merged = _deep_merge(merged, overrides)
    return config_from_dict(merged)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out
