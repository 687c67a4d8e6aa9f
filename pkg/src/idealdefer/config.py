"""Experiment configuration: a JSON document mapped onto a validated dataclass.

Schema (every key optional; omitted keys take the defaults below)::

    {
      "mixture":   {"num_classes": 10, "dim": 8, "sigma": 1.2, "scale": 3.0,
                    "priors": null, "seed": 0},
      "n_samples": 10000,
      "fractions": [0.5, 0.25, 0.25],
      "base_corruption":   {"kind": "label-noise", "k": 1} | null,
      "expert_corruption": null,
      "expert_is_model":   false,
      "base_hidden":   [32],
      "expert_hidden": [64],
      "point_loss": "gce",            # or {"kind": "gce", "q": 0.7}
      "gamma": 0.5, "gamma_expert": 0.5,
      "dr_loss": "squared",
      "methods": ["conf", "drcpe", "estimate-diff01", "estimate-maxprob", "twostage-exp"],
      "twostage_costs": [0.0, 0.02, 0.05, 0.1, 0.2],
      "target_rates": [0.05, 0.1, 0.15, 0.2, 0.25, 0.5, 0.75],
      "seeds": 11,
      "seed": 0,
      "head_epochs": 300,
      "plot": true,
      "out": "runs/default"
    }

``seed`` drives data generation and the base/expert classifiers; ``seeds`` is
the number of deferral-head restarts averaged into each curve point.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

from .baselines import TWOSTAGE_COSTS
from .core import PointLossKind
from .drcpe import SPECS
from .estimators import HEADS
from .synth import CorruptionSpec, MixtureSpec

DEFAULT_RATES = (0.05, 0.10, 0.15, 0.20, 0.25, 0.50, 0.75)
DEFAULT_METHODS = ("conf", "drcpe", "estimate-diff01", "estimate-maxprob", "twostage-exp")


class ConfigError(ValueError):
    """An experiment configuration that cannot be run."""


@dataclass
class ExperimentConfig:
    mixture: dict = field(default_factory=lambda: MixtureSpec().to_dict())
    n_samples: int = 10000
    fractions: List[float] = field(default_factory=lambda: [0.5, 0.25, 0.25])
    base_corruption: Optional[dict] = field(
        default_factory=lambda: {"kind": "label-noise", "k": 1})
    expert_corruption: Optional[dict] = None
    expert_is_model: bool = False
    base_hidden: List[int] = field(default_factory=lambda: [32])
    expert_hidden: List[int] = field(default_factory=lambda: [64])
    point_loss: object = "gce"
    gamma: float = 0.5
    gamma_expert: float = 0.5
    dr_loss: str = "squared"
    methods: List[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    twostage_costs: List[float] = field(default_factory=lambda: list(TWOSTAGE_COSTS))
    target_rates: List[float] = field(default_factory=lambda: list(DEFAULT_RATES))
    seeds: int = 11
    seed: int = 0
    head_epochs: int = 300
    plot: bool = True
    out: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.mixture_spec()
            self.point_loss_kind()
            L = self.mixture_spec().num_classes
            for c in (self.base_corruption_spec(), self.expert_corruption_spec()):
                if c is not None:
                    c.validate(L)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not isinstance(self.n_samples, int) or self.n_samples < 10:
            raise ConfigError("n_samples must be an integer >= 10")
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions) \
                or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("fractions must be three positive numbers summing to 1")
        if not (self.gamma > 0 and self.gamma_expert > 0):
            raise ConfigError(f"temperatures must be positive, got gamma={self.gamma}, "
                              f"gamma_expert={self.gamma_expert}")
        if self.dr_loss not in SPECS:
            raise ConfigError(f"unknown DR loss {self.dr_loss!r}; choose from {sorted(SPECS)}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = [m for m in self.methods if m not in HEADS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {sorted(HEADS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        rates = list(self.target_rates)
        if not rates or any(not 0.0 <= r <= 1.0 for r in rates) or rates != sorted(rates):
            raise ConfigError("target_rates must be non-empty, sorted ascending, within [0, 1]")
        if not self.twostage_costs or any(c < 0 for c in self.twostage_costs):
            raise ConfigError("twostage_costs must be non-empty and non-negative")
        if not isinstance(self.seeds, int) or self.seeds < 1:
            raise ConfigError("seeds must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if not isinstance(self.head_epochs, int) or self.head_epochs < 1:
            raise ConfigError("head_epochs must be a positive integer")
        if any(int(h) < 1 for h in [*self.base_hidden, *self.expert_hidden]):
            raise ConfigError("hidden layer sizes must be positive")

    def mixture_spec(self) -> MixtureSpec:
        return MixtureSpec.from_dict(self.mixture)

    def point_loss_kind(self) -> PointLossKind:
        return PointLossKind.from_dict(self.point_loss)

    def base_corruption_spec(self):
        return None if self.base_corruption is None else CorruptionSpec.from_dict(self.base_corruption)

    def expert_corruption_spec(self):
        if self.expert_corruption is None:
            return None
        return CorruptionSpec.from_dict(self.expert_corruption)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys {extra}")
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return type(self).from_dict(d)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def default_config(**changes) -> ExperimentConfig:
    """Label noise on class 0 of the base model's training data; clean, wider expert."""
    return ExperimentConfig().replace(**changes) if changes else ExperimentConfig()


def specialist_config(**changes) -> ExperimentConfig:
    """Complementary specialists: the expert favours classes 0-4, the base model 5-9."""
    cfg = ExperimentConfig(
        base_corruption={"kind": "specialist", "classes": [5, 6, 7, 8, 9], "p": 0.1},
        expert_corruption={"kind": "specialist", "classes": [0, 1, 2, 3, 4], "p": 0.1},
        methods=["conf", "drcpe"],
        out="runs/specialist",
    )
    return cfg.replace(**changes) if changes else cfg


PRESETS = {"default": default_config, "specialist": specialist_config}
