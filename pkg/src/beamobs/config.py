"""Experiment configuration: TOML/JSON files plus command-line overrides."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .beam_model import BeamSpec


class ConfigError(ValueError):
    """Invalid or unknown configuration input; maps to exit code 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything the CLI subcommands need, validated up front.

    Time quantities are policies, not absolutes: the horizon is given in
    periods of the first mode and dt as a step count per horizon, so the
    same config scales across mode counts.
    """

    length: float = 2.0
    width: float = 0.02
    thickness: float = 0.005
    elastic_modulus: float = 70e9
    density: float = 2700.0

    n_modes: int = 8
    grid_size: int = 501
    horizon_periods: float = 1.0
    dt_steps: int = 2000
    epsilon: float = 1e-4

    weight: float = 5.0
    budget: int = 10
    scan_modes: tuple = tuple(range(2, 11))
    place_budgets: tuple = tuple(range(1, 51))
    systems: tuple = ("truncated", "continuum")

    estimate_modes: int = 10
    estimate_variant: str = "truncated"
    n_trials: int = 20
    ic_disp_coeff: float = 0.01
    ic_vel_coeff: float = 0.0
    ukf_alpha: float = 1e-3
    ukf_beta: float = 2.0
    ukf_kappa: float = 0.0
    process_noise: float = 1e-10
    measurement_noise: float = 1e-4
    initial_variance_disp: float = 1e-2
    initial_variance_vel: float = 1e-4

    seed: int = 12345
    out_dir: str = "out"
    table_format: str = "csv"

    def validate(self) -> "ExperimentConfig":
        if self.n_modes < 1 or self.estimate_modes < 1:
            raise ConfigError("mode counts must be >= 1")
        if self.grid_size < 20 * max(self.n_modes, self.estimate_modes, max(self.scan_modes, default=1)):
            raise ConfigError(
                f"grid_size {self.grid_size} too coarse for the requested mode counts"
            )
        if self.horizon_periods <= 0 or self.dt_steps < 10:
            raise ConfigError("horizon_periods must be positive and dt_steps >= 10")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not 1 <= self.budget <= self.grid_size:
            raise ConfigError("budget must be within the candidate grid")
        if any(not 1 <= b <= self.grid_size for b in self.place_budgets):
            raise ConfigError("place_budgets must be within the candidate grid")
        if any(m < 1 for m in self.scan_modes):
            raise ConfigError("scan_modes must be >= 1")
        unknown = set(self.systems) - {"truncated", "continuum"}
        if unknown:
            raise ConfigError(f"unknown system variant(s): {sorted(unknown)}")
        if self.estimate_variant not in ("truncated", "continuum"):
            raise ConfigError(f"unknown estimate_variant {self.estimate_variant!r}")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.table_format not in ("csv", "json"):
            raise ConfigError(f"table_format must be csv or json, got {self.table_format!r}")
        if min(self.process_noise, self.measurement_noise,
               self.initial_variance_disp, self.initial_variance_vel) < 0:
            raise ConfigError("noise variances must be nonnegative")
        return self

    def beam_spec(self) -> BeamSpec:
        return BeamSpec(
            length=self.length,
            width=self.width,
            thickness=self.thickness,
            elastic_modulus=self.elastic_modulus,
            density=self.density,
        )

    def horizon_and_dt(self, fundamental_frequency: float) -> tuple[float, float]:
        horizon = self.horizon_periods * 2.0 * np.pi / fundamental_frequency
        return horizon, horizon / self.dt_steps


_LIST_FIELDS = {"scan_modes", "place_budgets", "systems"}


def _coerce(name: str, value, template):
    if name in _LIST_FIELDS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list")
        return tuple(type(template[0])(v) for v in value) if template else tuple(value)
    target = type(template)
    if target is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if target is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    if target is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    raise ConfigError(f"unsupported config field type for {name}")


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build a config from a flat mapping, rejecting unknown keys."""
    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in fields(ExperimentConfig)}
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: _coerce(k, v, known[k]) for k, v in mapping.items()}
    return replace(defaults, **values).validate()


def _read_mapping(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix == ".toml":
        try:
            mapping = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    elif path.suffix == ".json":
        try:
            mapping = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")
    if not isinstance(mapping, dict):
        raise ConfigError("config root must be a table/object")
    return mapping


def load_config(path) -> ExperimentConfig:
    return config_from_mapping(_read_mapping(Path(path)))


# Standalone beam files carry units in the key names so a file is readable
# without consulting the schema.
_BEAM_FILE_KEYS = {
    "length_m": "length",
    "width_m": "width",
    "thickness_m": "thickness",
    "elastic_modulus_pa": "elastic_modulus",
    "density_kg_m3": "density",
}


def load_beam_spec(path) -> tuple[BeamSpec, int, int]:
    """Read a beam description file; returns (spec, n_modes, grid_size).

    Expects exactly the keys length_m, width_m, thickness_m,
    elastic_modulus_pa, density_kg_m3, n_modes, grid_size.
    """
    mapping = _read_mapping(Path(path))
    required = set(_BEAM_FILE_KEYS) | {"n_modes", "grid_size"}
    missing = sorted(required - set(mapping))
    unknown = sorted(set(mapping) - required)
    if missing or unknown:
        raise ConfigError(
            f"beam file keys: missing {missing or 'none'}, unknown {unknown or 'none'}"
        )
    for key in ("n_modes", "grid_size"):
        if not isinstance(mapping[key], int) or isinstance(mapping[key], bool):
            raise ConfigError(f"{key} must be an integer, got {mapping[key]!r}")
    dims = {}
    for key, attr in _BEAM_FILE_KEYS.items():
        value = mapping[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        dims[attr] = float(value)
    return BeamSpec(**dims), mapping["n_modes"], mapping["grid_size"]
