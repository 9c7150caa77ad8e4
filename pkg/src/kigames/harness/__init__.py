"""Config-driven training, evaluation and reporting."""
from .config import ConfigError, ExperimentConfig
from .run import (
    GoldenAgent, RandomAgent, RunReport, compare, evaluate, final_means, load_agent, load_resources, reward_curves,
    run_episodes, run_trials, train, write_curves,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "GoldenAgent", "RandomAgent", "RunReport", "compare", "evaluate",
    "final_means", "load_agent", "load_resources", "reward_curves", "run_episodes", "run_trials", "train", "write_curves",
]
