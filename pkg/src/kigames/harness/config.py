"""Experiment configuration: a JSON file with a closed key set, plus per-agent hyperparameter checks."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..agents.drrn import DrrnConfig
from ..agents.kga2c import VARIANTS as KGA2C_VARIANTS
from ..agents.kga2c import Kga2cConfig
from ..agents.scorer import ScorerConfig

AGENTS = ("drrn", "kga2c", "scorer", "random", "golden")

DRRN_VARIANTS = {
    "baseline": {},
    "aff": {"use_aff": True},
    "mca": {"use_mca": True},
    "aff_mca": {"use_aff": True, "use_mca": True},
}
SCORER_VARIANTS = {
    "baseline": {"use_mca": False},
    "mca": {"use_mca": True},
    "aff": {"use_mca": False, "aff_pretrain": True},
    "aff_mca": {"use_mca": True, "aff_pretrain": True},
}

# Preset for the two-room chain: small enough that Q converges to the closed form in a few thousand steps.
CHAIN_DRRN = {"hidden": 64, "lr": 1e-3}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    agent: str = "drrn"
    variant: str = "baseline"
    tasks: list = field(default_factory=lambda: ["classification"])
    train_variations: list | None = None
    eval_variations: list | None = None
    seeds: list = field(default_factory=lambda: [0])
    eval_seeds: list = field(default_factory=lambda: [0, 1, 2])
    steps: int = 5000
    epochs: int = 3
    n_envs: int = 8
    max_steps: int = 100
    hyper: dict = field(default_factory=dict)
    world: str | None = None
    affordances: str | None = None
    out_dir: str = "runs/default"
    checkpoint_every: int = 0
    retrain_trials: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; expected one of {', '.join(AGENTS)}")
        presets = variant_table(self.agent)
        if presets is not None and self.variant not in presets:
            raise ConfigError(f"agent {self.agent} has no variant {self.variant!r}; "
                              f"expected one of {', '.join(presets)}")
        if not self.tasks:
            raise ConfigError("tasks must not be empty")
        if "chain" in self.tasks and self.agent not in ("drrn", "random", "golden"):
            raise ConfigError("the chain task only supports the drrn agent")
        if self.steps < 0 or self.epochs < 0:
            raise ConfigError("training budget must be non-negative")
        if self.n_envs < 1:
            raise ConfigError("n_envs must be at least 1")
        if not self.eval_seeds:
            raise ConfigError("eval_seeds must not be empty")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        known = agent_config_fields(self.agent)
        bad = sorted(set(self.hyper) - known)
        if bad:
            raise ConfigError(f"hyperparameters {bad} do not apply to agent {self.agent}")

    def agent_config(self):
        """The agent's own config dataclass with variant flags and overrides applied."""
        overrides = dict(self.hyper)
        if self.agent == "drrn":
            base = dict(CHAIN_DRRN) if self.tasks == ["chain"] else {}
            return DrrnConfig(**{**base, **DRRN_VARIANTS[self.variant], **overrides})
        if self.agent == "kga2c":
            return Kga2cConfig(**{**KGA2C_VARIANTS[self.variant], **overrides})
        if self.agent == "scorer":
            return ScorerConfig(**{"epochs": self.epochs, **SCORER_VARIANTS[self.variant], **overrides})
        return None

    def to_dict(self):
        return dataclasses.asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def replace(self, **changes):
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})


def variant_table(agent):
    return {"drrn": DRRN_VARIANTS, "kga2c": KGA2C_VARIANTS, "scorer": SCORER_VARIANTS}.get(agent)


def agent_config_fields(agent):
    cls = {"drrn": DrrnConfig, "kga2c": Kga2cConfig, "scorer": ScorerConfig}.get(agent)
    return {f.name for f in dataclasses.fields(cls)} if cls else set()
