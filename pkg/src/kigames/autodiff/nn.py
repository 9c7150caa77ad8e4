"""Parameter storage, initialisation and the sequence encoder."""
from __future__ import annotations

import numpy as np

from . import ops
from .gru import GruParams, gru_sequence
from .tensor import DTYPE, ShapeError, Tensor


class ParamStore:
    """Named, ordered collection of trainable tensors."""

    def __init__(self):
        self._params = {}

    def add(self, name, data):
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def gru(self, prefix):
        p = self._params
        return GruParams(p[f"{prefix}.W_x"], p[f"{prefix}.W_h"], p[f"{prefix}.b_x"], p[f"{prefix}.b_h"])

    def state_dict(self):
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state, strict=True):
        missing = [k for k in self._params if k not in state]
        extra = [k for k in state if k not in self._params]
        if strict and (missing or extra):
            raise ShapeError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for k, t in self._params.items():
            if k not in state:
                continue
            arr = np.asarray(state[k], dtype=DTYPE)
            if arr.shape != t.shape:
                raise ShapeError(f"tensor {k!r}: checkpoint shape {arr.shape} != model shape {t.shape}")
            t.data = arr.copy()

    def copy(self):
        other = ParamStore()
        for k, t in self._params.items():
            other.add(k, t.data.copy())
        return other

    def num_parameters(self):
        return int(sum(t.size for t in self))


def uniform(rng, shape, fan):
    bound = 1.0 / np.sqrt(fan)
    return rng.uniform(-bound, bound, size=shape)


def add_linear(store, rng, name, n_in, n_out, bias=True):
    store.add(f"{name}.W", uniform(rng, (n_in, n_out), n_in))
    if bias:
        store.add(f"{name}.b", np.zeros(n_out))


def add_gru(store, rng, name, n_in, hidden):
    store.add(f"{name}.W_x", uniform(rng, (n_in, 3 * hidden), hidden))
    store.add(f"{name}.W_h", uniform(rng, (hidden, 3 * hidden), hidden))
    store.add(f"{name}.b_x", np.zeros(3 * hidden))
    store.add(f"{name}.b_h", np.zeros(3 * hidden))


def add_embedding(store, rng, name, vocab_size, dim):
    store.add(name, uniform(rng, (vocab_size, dim), dim))


def apply_linear(store, name, x):
    b = store[f"{name}.b"] if f"{name}.b" in store else None
    return ops.linear(x, store[f"{name}.W"], b)


def pad_batch(seqs):
    """Right-pad integer sequences; returns (ids (B, T), mask (B, T))."""
    T = max((len(s) for s in seqs), default=0)
    ids = np.zeros((len(seqs), T), dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=DTYPE)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def encode_batch(embedding, gru, seqs, h0=None):
    """Embed and GRU-encode token sequences; returns (B, F) final states.

    Empty sequences encode to the zero vector (or ``h0``).
    """
    ids, mask = pad_batch(seqs)
    emb = ops.take(embedding, ids)
    return gru_sequence(emb, mask, gru, h0=h0)


def encode_sequence(tokens, embedding, gru):
    """Encode one token-id list to a vector of the GRU hidden size."""
    return ops.reshape(encode_batch(embedding, gru, [list(tokens)]), (gru.hidden,))


def encode_unique(embedding, gru, seqs):
    """Like :func:`encode_batch` but encodes each distinct sequence once."""
    keys = [tuple(s) for s in seqs]
    uniq = list(dict.fromkeys(keys))
    if len(uniq) == len(keys):
        return encode_batch(embedding, gru, seqs)
    enc = encode_batch(embedding, gru, [list(k) for k in uniq])
    pos = {k: i for i, k in enumerate(uniq)}
    return ops.take(enc, np.array([pos[k] for k in keys], dtype=np.int64))
