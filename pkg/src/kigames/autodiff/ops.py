"""Differentiable operations.

Each op computes its forward value with numpy and hands a vector-Jacobian
product to :func:`record`.  Broadcasting is supported for the elementwise
binary ops only.
"""
from __future__ import annotations

import numpy as np

from .tensor import DTYPE, ShapeError, Tensor, as_tensor, record


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=DTYPE)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------

def add(a, b):
    ad, bd = _data(a), _data(b)
    return record("add", ad + bd, (a, b),
                  lambda g: (_unbroadcast(g, ad.shape), _unbroadcast(g, bd.shape)))


def sub(a, b):
    ad, bd = _data(a), _data(b)
    return record("sub", ad - bd, (a, b),
                  lambda g: (_unbroadcast(g, ad.shape), _unbroadcast(-g, bd.shape)))


def mul(a, b):
    ad, bd = _data(a), _data(b)
    return record("mul", ad * bd, (a, b),
                  lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def neg(a):
    return record("neg", -a.data, (a,), lambda g: (-g,))


def square(a):
    ad = a.data
    return record("square", ad * ad, (a,), lambda g: (2.0 * ad * g,))


def tanh(a):
    y = np.tanh(a.data)
    return record("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    y = _sigmoid(a.data)
    return record("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a):
    mask = a.data > 0
    return record("relu", a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    mask = np.where(a.data > 0, 1.0, slope)
    return record("leaky_relu", a.data * mask, (a,), lambda g: (g * mask,))


def exp(a):
    y = np.exp(a.data)
    return record("exp", y, (a,), lambda g: (g * y,))


def log(a):
    ad = a.data
    return record("log", np.log(ad), (a,), lambda g: (g / ad,))


def dropout(a, rate, rng):
    """Inverted dropout with an explicit generator; identity when rate is 0."""
    if rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


# -- reductions and shape ----------------------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return record("sum", a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    old = a.shape
    return record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a):
    return record("transpose", a.data.T, (a,), lambda g: (g.T,))


def getitem(a, index):
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, index, g)
        return (out,)

    return record("getitem", a.data[index], (a,), vjp)


def take(table, ids):
    """Row gather (embedding lookup).  ``ids`` is an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        bad = ids[(ids < 0) | (ids >= n)].reshape(-1)[0]
        raise IndexError(f"token id {int(bad)} out of range for table with {n} rows")
    shape = table.shape

    def vjp(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (out,)

    return record("take", table.data[ids], (table,), vjp)


def scatter(values, positions, n):
    """Length-``n`` vector holding ``values`` at ``positions`` (distinct) and zeros elsewhere."""
    positions = np.asarray(positions, dtype=np.int64)
    out = np.zeros(n, dtype=DTYPE)
    out[positions] = values.data

    def vjp(g):
        return (g[positions],)

    return record("scatter", out, (values,), vjp)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    datas = [t.data for t in tensors]
    ax = axis % datas[0].ndim
    for d in datas[1:]:
        if d.ndim != datas[0].ndim or any(
            d.shape[i] != datas[0].shape[i] for i in range(d.ndim) if i != ax
        ):
            raise ShapeError(f"concat shape mismatch: {datas[0].shape} vs {d.shape}")
    bounds = np.cumsum([d.shape[ax] for d in datas])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return record("concat", np.concatenate(datas, axis=ax), tuple(tensors), vjp)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return record("stack", out, tuple(tensors), vjp)


# -- linear algebra -----------------------------------------------------------

def matmul(a, b):
    """``a @ b`` for a of shape (..., n) and a 2-D b of shape (n, m), or 2-D @ 2-D."""
    ad, bd = _data(a), _data(b)
    if ad.shape[-1] != bd.shape[0] or bd.ndim != 2:
        raise ShapeError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def vjp(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, bd.shape[1])
        return ga, gb

    return record("matmul", out, (a, b), vjp)


def linear(x, w, b=None):
    y = matmul(x, w)
    return y if b is None else add(y, b)


# -- probability ---------------------------------------------------------------

def _sigmoid(x):
    # tanh form: one ufunc call and no overflow for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax_np(x, axis=-1, mask=None):
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    if mask is not None:
        e = e * mask
    s = e.sum(axis=axis, keepdims=True)
    return e / np.where(s > 0, s, 1.0)


def softmax(a, axis=-1, mask=None):
    """Softmax along ``axis``; entries where ``mask`` is False get probability 0."""
    y = _softmax_np(a.data, axis, mask)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", y, (a,), vjp)


def log_softmax(a, axis=-1, mask=None):
    """Log-softmax along ``axis``; masked-out entries read 0 and get no gradient.

    A slice with no unmasked entries yields all zeros.
    """
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = x - m
    e = np.exp(shifted)
    s = e.sum(axis=axis, keepdims=True)
    y = shifted - np.log(np.where(s > 0, s, 1.0))
    p = e / np.where(s > 0, s, 1.0)
    if mask is not None:
        y = np.where(mask, y, 0.0)

    def vjp(g):
        if mask is not None:
            g = np.where(mask, g, 0.0)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return record("log_softmax", y, (a,), vjp)


def cross_entropy(logits, target):
    """``-log softmax(logits)[target]`` for a 1-D logit vector."""
    n = logits.shape[-1]
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy expects a vector, got shape {logits.shape}")
    if not 0 <= target < n:
        raise IndexError(f"target {target} out of range for {n} classes")
    x = logits.data
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    p = np.exp(x - lse)
    loss = lse - x[target]

    def vjp(g):
        d = p.copy()
        d[target] -= 1.0
        return (g * d,)

    return record("cross_entropy", np.asarray(loss), (logits,), vjp)


def binary_cross_entropy(probs, targets, eps=1e-12, weights=None):
    """Mean of ``-(y log p + (1-y) log(1-p))`` over all entries.

    With ``weights`` the result is the weighted sum instead of the mean, which
    lets callers average ragged rows.  Each log is floored at ``log(eps)`` so
    saturated predictions stay finite; p=1 with y=1 gives exactly zero.
    """
    p = probs.data
    y = np.asarray(targets, dtype=DTYPE)
    if y.shape != p.shape:
        raise ShapeError(f"bce shape mismatch: {p.shape} vs {y.shape}")
    w = np.full(p.shape, 1.0 / max(p.size, 1)) if weights is None else np.asarray(weights, dtype=DTYPE)
    lp = np.log(np.maximum(p, eps))
    l1p = np.log(np.maximum(1.0 - p, eps))
    loss = -(w * (y * lp + (1.0 - y) * l1p)).sum()

    def vjp(g):
        dp = -(y / np.maximum(p, eps) * (p > eps)) + (1.0 - y) / np.maximum(1.0 - p, eps) * (1.0 - p > eps)
        return (g * w * dp,)

    return record("bce", np.asarray(loss), (probs,), vjp)


def negative_entropy(logp, mask=None):
    """``sum P log P`` given log-probabilities; entries outside ``mask`` are ignored."""
    lp = logp.data
    keep = np.ones(lp.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    p = np.where(keep, np.exp(np.where(keep, lp, 0.0)), 0.0)
    val = np.where(p > 0, p * lp, 0.0).sum()

    def vjp(g):
        return (g * p * (lp + 1.0),)

    return record("neg_entropy", np.asarray(val), (logp,), vjp)


def masked_softmax_rows(scores, mask):
    """Row softmax restricted to ``mask`` (boolean, same shape)."""
    return softmax(scores, axis=-1, mask=mask)
