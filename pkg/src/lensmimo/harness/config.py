"""Experiment configuration: defaults per experiment, flat YAML files, and
validation."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import yaml

__all__ = ["EXPERIMENTS", "ConfigError", "UnknownExperiment", "ExperimentConfig", "load_config"]

EXPERIMENTS = ("fig5", "fig6", "fig7-sumrate-vs-K", "fig8-smallmimo", "fig9-selection", "custom")

DEFAULT_TRIALS = 2000

RHO_TR_SWEEP = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]

# experiment-specific overrides of the dataclass defaults
_PRESETS = {
    "fig5": {"K": 1, "sweep": RHO_TR_SWEEP},
    "fig6": {"K": 20, "sweep": RHO_TR_SWEEP},
    "fig7-sumrate-vs-K": {"sweep": [1, 5, 10, 15, 20, 25, 30]},
    "fig8-smallmimo": {"K": 20, "sweep": RHO_TR_SWEEP},
    "fig9-selection": {"K": 10, "sweep": [5, 10, 15, 20, 25, 30, 35, 40, 45, 50]},
    "custom": {"K": 4, "sweep": RHO_TR_SWEEP},
}

# what the sweep values mean for each experiment
SWEEP_AXIS = {
    "fig5": "rho_tr_db",
    "fig6": "rho_tr_db",
    "fig7-sumrate-vs-K": "K",
    "fig8-smallmimo": "rho_tr_db",
    "fig9-selection": "N",
    "custom": "rho_tr_db",
}


class ConfigError(ValueError):
    """Invalid configuration or parameter combination."""


class UnknownExperiment(ConfigError):
    pass


@dataclass
class ExperimentConfig:
    """Parameters of one experiment run.

    Angles are in degrees, SNRs in dB, lengths in wavelengths. The lens
    variance is in units of ``d**2``.
    """

    experiment: str
    M: int = 50
    K: int = 20
    d: float = 1.0
    coverage_deg: float = 60.0
    spread_deg: float = 10.0
    beta: float = 1.0
    lens_delta: int = 2
    lens_variance: float = 0.5
    rho_d_db: float = 0.0
    rho_tr_db: float = 10.0
    groups: int = 10
    sweep: list = field(default_factory=list)
    aoas_deg: Optional[list] = None
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    out: Optional[str] = None
    theory_only: bool = False

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise UnknownExperiment(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        params = dict(_PRESETS[experiment])
        params.update({k: v for k, v in overrides.items() if v is not None})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(params) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(experiment=experiment, **params)
        cfg.validate()
        return cfg

    @property
    def coverage(self) -> float:
        return math.radians(self.coverage_deg)

    @property
    def spread(self) -> float:
        return math.radians(self.spread_deg)

    @property
    def rho_d(self) -> float:
        return 10 ** (self.rho_d_db / 10)

    @property
    def rho_tr(self) -> float:
        return 10 ** (self.rho_tr_db / 10)

    @property
    def sweep_axis(self) -> str:
        return SWEEP_AXIS[self.experiment]

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.M, int) and self.M >= 1, "M must be a positive integer")
        need(isinstance(self.K, int) and self.K >= 1, "K must be a positive integer")
        need(self.d > 0, "d must be positive")
        need(0 < self.coverage_deg <= 180, "coverage_deg must lie in (0, 180]")
        need(self.spread_deg >= 0, "spread_deg must be nonnegative")
        need(self.beta > 0, "beta must be positive")
        need(isinstance(self.lens_delta, int) and self.lens_delta >= 0, "lens_delta must be a nonnegative integer")
        need(self.lens_delta < self.M / 2, "lens_delta must be below M/2")
        need(self.lens_variance > 0, "lens_variance must be positive")
        need(isinstance(self.trials, int) and self.trials >= 1, "trials must be a positive integer")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        need(isinstance(self.sweep, list) and len(self.sweep) > 0, "sweep must be a nonempty list")
        need(all(isinstance(v, (int, float)) and math.isfinite(v) for v in self.sweep), "sweep values must be finite numbers")
        need(math.isfinite(self.rho_d_db) and math.isfinite(self.rho_tr_db), "SNRs must be finite")
        axis = self.sweep_axis
        if axis == "K":
            need(all(float(v).is_integer() and v >= 1 for v in self.sweep), "K sweep values must be positive integers")
        if axis == "N":
            need(all(float(v).is_integer() and 1 <= v <= self.M for v in self.sweep), f"N sweep values must be integers in [1, {self.M}]")
        if self.experiment == "fig8-smallmimo":
            need(isinstance(self.groups, int) and 1 <= self.groups <= self.M, "groups must be an integer in [1, M]")
        if self.aoas_deg is not None:
            need(len(self.aoas_deg) == self.K, "aoas_deg must list one AoA per user")
            need(all(abs(t) <= self.coverage_deg for t in self.aoas_deg), "aoas_deg must lie within the coverage angle")


def load_config(path: str) -> dict:
    """Read a flat YAML mapping of configuration keys."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a flat key-value mapping")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r} is nested; only flat keys are supported")
    return data
