"""Tensors and the reverse-mode gradient tape.

Operations record themselves on the innermost active :class:`Tape`.  Outside a
tape (or when no input requires a gradient) they run as plain numpy and
record nothing, which is how agents do inference.
"""
from __future__ import annotations

import threading

import numpy as np

DTYPE = np.float64

_state = threading.local()


def _tape_stack():
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class ShapeError(ValueError):
    pass


class Tensor:
    """A float64 array that can take part in a gradient computation."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # operator sugar; the implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.mul(self, 1.0 / np.asarray(other, dtype=DTYPE))

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    __slots__ = ("op", "out", "inputs", "vjp")

    def __init__(self, op, out, inputs, vjp):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; one tape per training step::

        with Tape() as tape:
            loss = model_loss(params)
        grads = tape.backward(loss, params)
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted")
        stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, out, inputs, vjp):
        self.nodes.append(Node(op, out, inputs, vjp))

    def backward(self, loss, params=None):
        return backward(self, loss, params)


def record(op, out_data, inputs, vjp):
    """Wrap ``out_data`` in a Tensor, registering ``vjp`` if gradients can flow.

    ``vjp(g)`` must return one gradient (or None) per entry of ``inputs``.
    """
    tape = active_tape()
    if tape is None or not any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        return Tensor(out_data)
    out = Tensor(out_data, requires_grad=True)
    tape.record(op, out, inputs, vjp)
    return out


def backward(tape, loss, params=None):
    """Reverse sweep over ``tape`` from the scalar ``loss``.

    Returns a dict mapping Tensor -> gradient array.  When ``params`` (an
    iterable of tensors) is given, every one of them gets an entry, zero if the
    loss does not depend on it.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    if params is None:
        return _collect(tape, loss, grads)
    out = {}
    for p in params:
        g = grads.get(id(p))
        out[p] = np.zeros_like(p.data) if g is None else g.reshape(p.shape)
    return out


def _collect(tape, loss, grads):
    # Leaves are tensors that feed the tape but are not produced by it.
    produced = {id(n.out) for n in tape.nodes}
    out = {}
    for node in tape.nodes:
        for t in node.inputs:
            if isinstance(t, Tensor) and t.requires_grad and id(t) not in produced:
                if t not in out:
                    out[t] = grads.get(id(t), np.zeros_like(t.data)).reshape(t.shape)
    if loss.requires_grad and id(loss) not in produced:
        out[loss] = np.ones_like(loss.data)
    return out
