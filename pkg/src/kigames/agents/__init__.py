"""The three agents: DRRN, KG-A2C and the multiple-choice action scorer."""
from .common import EnvBatch, build_vocab, make_world_env, observation_text
from .drrn import DrrnAgent, DrrnConfig
from .kga2c import Kga2cAgent, Kga2cConfig, binary_score_encoding, decode_score_bits, variant_config
from .scorer import ScorerAgent, ScorerConfig, ScorerExample, build_training_example, nucleus, select_action

__all__ = [
    "DrrnAgent", "DrrnConfig", "EnvBatch", "Kga2cAgent", "Kga2cConfig", "ScorerAgent", "ScorerConfig",
    "ScorerExample", "binary_score_encoding", "build_training_example", "build_vocab", "decode_score_bits",
    "make_world_env", "nucleus", "observation_text", "select_action", "variant_config",
]
