"""Run configuration: one YAML document covering the intersection, cost
weights, arrival stream, fuel model, and solver/monitor knobs.

Parsing is strict: unknown keys anywhere in the document are rejected with
the offending key named, and parse(serialize(cfg)) == cfg.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .errors import ConfigError
from .model import CostWeights, IntersectionConfig
from .sim import ArrivalModel, FuelModelCoefficients


@dataclass(frozen=True)
class RunConfig:
    """Everything a simulation run needs, in one serializable object."""

    intersection: IntersectionConfig = field(default_factory=IntersectionConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    arrivals: ArrivalModel = field(default_factory=ArrivalModel)
    fuel: FuelModelCoefficients = field(default_factory=FuelModelCoefficients)
    solver_tolerance: float = 1e-8
    monitor_step: float = 0.01          # dense-grid spacing [s]
    monitor_tolerance: float = 1e-6
    sample_step: float = 0.01           # export sampling [s]
    infeasible_policy: str = "skip"
    output_dir: str = "out"

    def __post_init__(self):
        if self.monitor_step <= 0 or self.sample_step <= 0:
            raise ConfigError("grid steps must be positive")
        if self.solver_tolerance <= 0 or self.monitor_tolerance <= 0:
            raise ConfigError("tolerances must be positive")
        if self.infeasible_policy not in ("skip", "abort"):
            raise ConfigError("infeasible_policy must be 'skip' or 'abort'")


_SECTIONS = {
    "intersection": IntersectionConfig,
    "weights": CostWeights,
    "arrivals": ArrivalModel,
    "fuel": FuelModelCoefficients,
}


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section '{where}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(
            f"unknown key(s) in '{where}': {', '.join(sorted(unknown))}"
        )
    kwargs = {
        k: tuple(v) if isinstance(v, list) else v for k, v in data.items()
    }
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top-level config must be a mapping")
    scalar_names = {
        f.name for f in dataclasses.fields(RunConfig) if f.name not in _SECTIONS
    }
    unknown = set(data) - set(_SECTIONS) - scalar_names
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    kwargs = {
        name: _build(cls, data.get(name), name) for name, cls in _SECTIONS.items()
    }
    for name in scalar_names:
        if name in data:
            kwargs[name] = data[name]
    return RunConfig(**kwargs)


def config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            out[f.name] = {
                g.name: _plain(getattr(value, g.name))
                for g in dataclasses.fields(value)
            }
        else:
            out[f.name] = value
    return out


def _plain(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def load_config(path: str) -> RunConfig:
    """Parse a YAML run configuration, rejecting unknown keys."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(data or {})


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)
