"""Tensors, the recording tape and the reverse sweep.

Operations only record onto a tape while one is active (``with Tape() as tape``).
Outside a tape every op is a plain numpy evaluation, which is how inference
and the gradient stop between the target model and the loss predictor work.
"""
from __future__ import annotations

import threading

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operands of a primitive have incompatible shapes."""


class TapeError(RuntimeError):
    """Misuse of the tape, such as seeding the sweep with a foreign tensor."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")
    # Make numpy defer to the reflected operators below (ndarray * Tensor -> Tensor).
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data

    def numpy(self):
        return self.data

    def detach(self):
        """A new leaf holding a copy of the values, cut from any tape."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; the primitives live in ``ops``.
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
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.slice_(self, index)


class Parameter(Tensor):
    """A trainable leaf with a stable identifier and a gradient buffer."""

    __slots__ = ()

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


class _Node:
    __slots__ = ("op", "out", "inputs", "backward")

    def __init__(self, op, out, inputs, backward):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward = backward


_state = threading.local()


def _stack():
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape():
    return getattr(_state, "top", None)


class Tape:
    """Ordered record of primitive applications.

    Nodes are appended as ops execute, so the list is topologically ordered
    by construction.
    """

    def __init__(self):
        self.nodes = []
        self._outputs = set()

    def __enter__(self):
        stack = _stack()
        stack.append(self)
        _state.top = self
        return self

    def __exit__(self, *exc):
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()
        _state.top = stack[-1] if stack else None
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, out, inputs, backward):
        self.nodes.append(_Node(op, out, inputs, backward))
        self._outputs.add(id(out))

    def backward(self, seed, seed_grad=None, keep=False):
        """Reverse sweep from ``seed``; leaf gradients accumulate into ``.grad``.

        The tape is released afterwards unless ``keep`` is set.
        """
        if not isinstance(seed, Tensor) or id(seed) not in self._outputs:
            raise TapeError("seed tensor was not produced on this tape")
        if seed_grad is None:
            if seed.size != 1:
                raise TapeError(f"seed must be a scalar, got shape {seed.shape}")
            seed_grad = np.ones_like(seed.data)
        grads = {id(seed): np.asarray(seed_grad, dtype=DTYPE)}
        leaves = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, ig in zip(node.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                prev = grads.get(key)
                grads[key] = ig if prev is None else prev + ig
                if key not in self._outputs:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            g = grads[key]
            if leaf.grad is None:
                leaf.grad = np.array(g, dtype=DTYPE, copy=True)
            else:
                leaf.grad = leaf.grad + g
        if not keep:
            self.nodes = []
            self._outputs = set()


def backpropagate(tape, seed):
    """Run the reverse sweep of ``tape`` from the scalar ``seed``."""
    tape.backward(seed)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make(op, data, inputs, backward):
    """Wrap a forward value and record it if any input needs a gradient."""
    tape = getattr(_state, "top", None)
    if tape is not None:
        for t in inputs:
            if t.requires_grad:
                out = Tensor(data, requires_grad=True)
                tape.record(op, out, inputs, backward)
                return out
    return Tensor(data)


def evaluate(fn, *inputs):
    """Evaluate ``fn(*inputs)`` on a fresh tape; returns ``(output, tape)``."""
    with Tape() as tape:
        out = fn(*inputs)
    return out, tape
