"""Fused GRU kernels.

Gate layout follows the usual convention, with row-vector inputs::

    r  = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
    z  = sigmoid(x Wx_z + bx_z + h Wh_z + bh_z)
    n  = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
    h' = (1 - z) * n + z * h

``Wx`` is (F_in, 3F), ``Wh`` is (F, 3F) and the biases are (3F,), gates
stacked in r, z, n order.  A whole sequence is one tape node whose backward
pass is hand-written backpropagation through time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import _sigmoid
from .tensor import DTYPE, ShapeError, Tensor, record


@dataclass
class GruParams:
    W_x: Tensor
    W_h: Tensor
    b_x: Tensor
    b_h: Tensor

    @property
    def n_in(self):
        return self.W_x.shape[0]

    @property
    def hidden(self):
        return self.W_h.shape[0]

    def tensors(self):
        return (self.W_x, self.W_h, self.b_x, self.b_h)


def _cell_forward(gx, h, Wh, bh, F):
    gh = h @ Wh + bh
    rz = _sigmoid(gx[:, :2 * F] + gh[:, :2 * F])
    r, z = rz[:, :F], rz[:, F:]
    hn = gh[:, 2 * F:]
    n = np.tanh(gx[:, 2 * F:] + r * hn)
    return n + z * (h - n), (r, z, n, hn)


def _cell_backward(dh_new, h, cache, F, dgx=None, dgh=None):
    """Gradients w.r.t. the input gates, hidden gates and previous state.

    ``dgx``/``dgh`` may be preallocated (B, 3F) buffers to write into.
    """
    r, z, n, hn = cache
    if dgx is None:
        dgx = np.empty((h.shape[0], 3 * F), dtype=DTYPE)
    if dgh is None:
        dgh = np.empty_like(dgx)
    dn_pre = dh_new * (1.0 - z) * (1.0 - n * n)
    dgx[:, 2 * F:] = dn_pre
    dgx[:, F:2 * F] = dh_new * (h - n) * z * (1.0 - z)
    dgx[:, :F] = dn_pre * hn * r * (1.0 - r)
    dgh[:, :2 * F] = dgx[:, :2 * F]
    dgh[:, 2 * F:] = dn_pre * r
    return dgx, dgh, dh_new * z


def _check(params, n_in, h_dim):
    F = params.hidden
    if params.W_x.shape != (n_in, 3 * F):
        raise ShapeError(f"GRU input weight shape {params.W_x.shape} does not match input width {n_in}")
    if h_dim != F:
        raise ShapeError(f"GRU hidden shape ({h_dim},) does not match parameter hidden size ({F},)")
    return F


def gru_step(x, h, params):
    """One GRU cell update.  ``x`` is (F_in,) or (B, F_in); ``h`` matches (F,) or (B, F)."""
    single = x.data.ndim == 1
    xd = np.atleast_2d(x.data)
    hd = np.atleast_2d(h.data)
    if xd.shape[0] != hd.shape[0]:
        raise ShapeError(f"GRU batch mismatch: x {x.shape} vs h {h.shape}")
    if params.W_x.shape[0] != xd.shape[1]:
        raise ShapeError(f"GRU shape mismatch: x {x.shape} vs W_x {params.W_x.shape}")
    if params.W_h.shape[0] != hd.shape[1]:
        raise ShapeError(f"GRU shape mismatch: h {h.shape} vs W_h {params.W_h.shape}")
    F = params.hidden
    Wx, Wh, bx, bh = (t.data for t in params.tensors())
    gx = xd @ Wx + bx
    out, cache = _cell_forward(gx, hd, Wh, bh, F)

    def vjp(g):
        g = np.atleast_2d(g)
        dgx, dgh, dh = _cell_backward(g, hd, cache, F)
        dx = dgx @ Wx.T
        dh = dh + dgh @ Wh.T
        grads = (xd.T @ dgx, hd.T @ dgh, dgx.sum(0), dgh.sum(0))
        if single:
            dx, dh = dx[0], dh[0]
        return (dx, dh) + grads

    return record("gru_step", out[0] if single else out, (x, h) + params.tensors(), vjp)


def gru_sequence(X, mask, params, h0=None):
    """Run a GRU over a padded batch and return the final hidden state (B, F).

    ``X`` is a (B, T, F_in) tensor, ``mask`` a (B, T) array of 0/1 marking real
    tokens.  Masked steps carry the previous hidden state through unchanged,
    so a row with no real tokens returns ``h0`` (zeros by default).
    """
    Xd = X.data
    B, T, n_in = Xd.shape
    F = params.hidden
    if params.W_x.shape[0] != n_in:
        raise ShapeError(f"GRU shape mismatch: input (B, T, {n_in}) vs W_x {params.W_x.shape}")
    m = np.asarray(mask, dtype=DTYPE).reshape(B, T, 1)
    Wx, Wh, bx, bh = (t.data for t in params.tensors())
    if h0 is None:
        h = np.zeros((B, F), dtype=DTYPE)
    else:
        h = np.broadcast_to(h0.data, (B, F)).astype(DTYPE)
        if h0.shape[-1] != F:
            raise ShapeError(f"initial hidden shape {h0.shape} does not match GRU hidden size {F}")
    if T == 0:
        inputs = (X,) + params.tensors() + ((h0,) if h0 is not None else ())
        h_init = h

        def vjp0(g):
            gs = (np.zeros_like(Xd), np.zeros_like(Wx), np.zeros_like(Wh), np.zeros_like(bx), np.zeros_like(bh))
            if h0 is not None:
                gs = gs + (_reduce_h0(g, h0.shape),)
            return gs

        return record("gru_sequence", h_init.copy(), inputs, vjp0)
    GX = Xd @ Wx + bx  # (B, T, 3F)
    hs = np.empty((T + 1, B, F), dtype=DTYPE)
    hs[0] = h
    caches = []
    for t in range(T):
        new, cache = _cell_forward(GX[:, t], hs[t], Wh, bh, F)
        mt = m[:, t]
        hs[t + 1] = mt * new + (1.0 - mt) * hs[t]
        caches.append(cache)
    out = hs[T].copy()

    def vjp(g):
        dGX = np.empty_like(GX)
        dGH = np.empty_like(GX)
        dh = g.copy()
        for t in range(T - 1, -1, -1):
            mt = m[:, t]
            _, _, dprev = _cell_backward(dh * mt, hs[t], caches[t], F, dGX[:, t], dGH[:, t])
            dh = dh * (1.0 - mt) + dprev + dGH[:, t] @ Wh.T
        flat = dGX.reshape(-1, 3 * F)
        flat_h = dGH.reshape(-1, 3 * F)
        dWh = hs[:T].transpose(1, 0, 2).reshape(-1, F).T @ flat_h
        dbh = flat_h.sum(0)
        dWx = Xd.reshape(-1, n_in).T @ flat
        dbx = flat.sum(0)
        dX = dGX @ Wx.T
        gs = (dX, dWx, dWh, dbx, dbh)
        if h0 is not None:
            gs = gs + (_reduce_h0(dh, h0.shape),)
        return gs

    inputs = (X,) + params.tensors() + ((h0,) if h0 is not None else ())
    return record("gru_sequence", out, inputs, vjp)


def _reduce_h0(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=0).reshape(shape)
