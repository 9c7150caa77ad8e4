from __future__ import annotations

import numpy as np

from .tensor import ShapeError


class Adam:
    """Bias-corrected Adam over a :class:`ParamStore`."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, grads):
        """Apply one update.  ``grads`` maps Tensor -> array; missing params count as zero."""
        named = {}
        for name, p in self.params.items():
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.shape:
                raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
            named[name] = g
        if self.clip_norm is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in named.values()))
            if norm > self.clip_norm:
                scale = self.clip_norm / norm
                named = {k: g * scale for k, g in named.items()}
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        step = self.lr / c1
        for name, p in self.params.items():
            g = named[name]
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data = p.data - step * m / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        out = {"t": np.array(self.t)}
        for k in self.m:
            out[f"m/{k}"] = self.m[k]
            out[f"v/{k}"] = self.v[k]
        return out


def adam_step(params, grads, state):
    """Functional form: update ``params`` in place with optimizer ``state`` (an :class:`Adam`)."""
    state.step(grads)
    return params
