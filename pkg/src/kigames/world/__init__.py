"""Deterministic miniature science world: world files, rules, text and golden sequences."""
from .engine import (
    INVENTORY, REFUSAL, Engine, EpisodeState, StepResult, TextWorldEnv, golden_sequence, reset, step, valid_actions,
)
from .worldfile import MAX_STEPS, WorldFileError, WorldSpec, bundled_world_path, load_world, parse_world


def load_bundled_world():
    return load_world(bundled_world_path())


__all__ = [
    "Engine", "EpisodeState", "INVENTORY", "MAX_STEPS", "REFUSAL", "StepResult", "TextWorldEnv", "WorldFileError",
    "WorldSpec", "bundled_world_path", "golden_sequence", "load_bundled_world", "load_world", "parse_world", "reset",
    "step", "valid_actions",
]
