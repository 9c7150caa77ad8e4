"""Central finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from .tensor import Tape


def numeric_grad(fn, tensor, h=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``tensor``."""
    g = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = float(fn().data)
        flat[i] = old - h
        down = float(fn().data)
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def relative_error(a, b, floor=1e-8):
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))) if a.size else 0.0


def check_gradients(fn, tensors, h=1e-5, floor=1e-6):
    """Compare tape gradients of scalar ``fn()`` against finite differences.

    Returns the worst relative error, where the denominator is floored at
    ``floor`` so entries with near-zero gradient compare absolutely.
    """
    with Tape() as tape:
        out = fn()
    analytic = tape.backward(out, tensors)
    worst = 0.0
    for t in tensors:
        num = numeric_grad(fn, t, h)
        worst = max(worst, relative_error(analytic[t], num, floor))
    return worst
