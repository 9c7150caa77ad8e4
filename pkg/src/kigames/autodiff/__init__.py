"""Minimal reverse-mode autodiff on numpy, with the optimizer and checkpoints agents need."""
from . import ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gru import GruParams, gru_sequence, gru_step
from .nn import ParamStore, encode_batch, encode_sequence, encode_unique, pad_batch
from .ops import cross_entropy, softmax
from .optim import Adam, adam_step
from .tensor import ShapeError, Tape, Tensor, backward
from .text import Vocab, tokenize

__all__ = [
    "Adam", "CheckpointError", "GruParams", "ParamStore", "ShapeError", "Tape", "Tensor",
    "Vocab", "adam_step", "backward", "cross_entropy", "encode_batch", "encode_sequence",
    "encode_unique", "gru_sequence", "gru_step", "load_checkpoint", "ops", "pad_batch",
    "save_checkpoint", "softmax", "tokenize",
]
