"""Run configuration: JSON schema, validation, presets, method table.

A config names a benchmark and a method, optionally overrides mapping
parameters and stage budgets, and picks a budget preset.  Unknown keys
are rejected.  Command-line flags override file values (flags win).

Budget presets:

    full   Adam 6000 steps x 3000 points, L-BFGS 500 steps x 15000 points
           (the published protocol; the default)
    desk   Adam 2000 steps x 1000 points, L-BFGS 200 steps x 4000 points
           (scaled for ~minutes per run on one CPU core)

Mapping presets: "default" keeps alpha=20, beta=10 everywhere; "tuned"
selects the per-benchmark sweep optima where they were measured
(burgers1d: alpha=50, beta=20; convdiff1d: beta=50; ns2d: beta=40).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .benchmarks import BENCHMARK_NAMES
from .errors import ConfigError

METHODS = {
    # method -> (mapping variant, strategy, fourier frontend)
    "pinn": ("identity", "vanilla", False),
    "ff": ("identity", "ff", True),
    "sa": ("identity", "sa", False),
    "rar": ("identity", "rar", False),
    "gpinn": ("identity", "gpinn", False),
    "gc-torus": ("torus", "gc", False),
    "gc-radial": ("radial", "gc", False),
    "gc-local": ("local_stretch", "gc", False),
    "gc-pwl": ("pwl", "gc", False),
    "gc-saturating": ("saturating", "gc", False),
}

PRESETS = {
    "full": {"adam_epochs": 6000, "adam_points": 3000,
             "lbfgs_steps": 500, "lbfgs_points": 15000},
    "desk": {"adam_epochs": 2000, "adam_points": 1000,
             "lbfgs_steps": 200, "lbfgs_points": 4000},
}

DEFAULT_ALPHA = 20.0
DEFAULT_BETA = 10.0

TUNED_ALPHA = {"burgers1d": 50.0, "convdiff1d": 20.0, "ns2d": 20.0}
TUNED_BETA = {"burgers1d": 20.0, "convdiff1d": 50.0, "ns2d": 40.0}


@dataclass
class RunConfig:
    benchmark: str = "helmholtz1d"
    method: str = "pinn"
    alpha: float | None = None
    beta: float | None = None
    train_mapping: bool = False
    seed: int = 3407
    preset: str = "full"
    mapping_preset: str = "default"
    adam_epochs: int | None = None
    adam_points: int | None = None
    lbfgs_steps: int | None = None
    lbfgs_points: int | None = None
    trials: int = 1
    workers: int = 1
    out: str | None = None

    def validate(self):
        if self.benchmark not in BENCHMARK_NAMES:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}; "
                              f"choose from {sorted(BENCHMARK_NAMES)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; "
                              f"choose from {sorted(METHODS)}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from "
                              f"{sorted(PRESETS)}")
        if self.mapping_preset not in ("default", "tuned"):
            raise ConfigError("mapping_preset must be 'default' or 'tuned'")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.beta is not None and self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for key in ("adam_epochs", "adam_points", "lbfgs_steps", "lbfgs_points"):
            v = getattr(self, key)
            if v is not None and v < 0:
                raise ConfigError(f"{key} must be nonnegative")
        return self

    # -- resolution ------------------------------------------------------

    def resolved_alpha(self):
        if self.alpha is not None:
            return float(self.alpha)
        if self.mapping_preset == "tuned":
            return TUNED_ALPHA.get(self.benchmark, DEFAULT_ALPHA)
        return DEFAULT_ALPHA

    def resolved_beta(self):
        if self.beta is not None:
            return float(self.beta)
        if self.mapping_preset == "tuned":
            return TUNED_BETA.get(self.benchmark, DEFAULT_BETA)
        return DEFAULT_BETA

    def resolved_budget(self):
        budget = dict(PRESETS[self.preset])
        for key in budget:
            override = getattr(self, key)
            if override is not None:
                budget[key] = override
        return budget

    def resolved(self):
        """Fully resolved settings for provenance headers."""
        out = self.to_dict()
        out["alpha"] = self.resolved_alpha()
        out["beta"] = self.resolved_beta()
        out.update(self.resolved_budget())
        return out

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc))
        return cfg.validate()

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}")
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())
