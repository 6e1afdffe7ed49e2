"""Differentiable primitives.

Every op takes Tensors (or array-likes for non-differentiable operands),
computes the forward value with numpy and, when a tape is active, records a
closure mapping the output gradient to one gradient per input (``None`` for
inputs that do not need one).
"""
from __future__ import annotations

import numpy as np

from .tensor import DTYPE, ShapeError, Tensor, active_tape, as_tensor, make

LOG_FLOOR = 1e-12


def _shape_error(op, *tensors, detail=""):
    tape = active_tape()
    where = f" at tape node {len(tape)}" if tape is not None else ""
    names = ", ".join(
        f"{t.name or 'operand'}{t.shape}" for t in tensors if isinstance(t, Tensor)
    )
    msg = f"{op}{where}: incompatible shapes {names}"
    if detail:
        msg += f" ({detail})"
    return ShapeError(msg)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_pair(op, a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    sa, sb = a.data.shape, b.data.shape
    if sa != sb:
        try:
            np.broadcast_shapes(sa, sb)
        except ValueError:
            raise _shape_error(op, a, b) from None
    return a, b


# -- arithmetic ---------------------------------------------------------------

def add(a, b):
    a, b = _broadcast_pair("add", a, b)

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return make("add", a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _broadcast_pair("sub", a, b)

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return make("sub", a.data - b.data, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return make("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _broadcast_pair("mul", a, b)

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return make("mul", a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _broadcast_pair("div", a, b)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        )

    return make("div", out, (a, b), backward)


def matmul(a, b):
    """``a @ b`` with ``b`` a matrix; ``a`` may carry leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise _shape_error("matmul", a, b)

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.outer(a.data, g)
            else:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return make("matmul", a.data @ b.data, (a, b), backward)


# -- nonlinearities -----------------------------------------------------------

def leaky_relu(x, alpha=0.01):
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)
    return make("leaky_relu", x.data * slope, (x,), lambda g: (g * slope,))


def relu(x):
    return leaky_relu(x, 0.0)


def sigmoid(x):
    x = as_tensor(x)
    s = np.tanh(0.5 * x.data)
    s += 1.0
    s *= 0.5

    def backward(g):
        return (g * s * (1.0 - s),)

    return make("sigmoid", s, (x,), backward)


def tanh(x):
    x = as_tensor(x)
    t = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - t * t),)

    return make("tanh", t, (x,), backward)


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make("softmax", s, (x,), backward)


def log(x):
    """Natural log with inputs clamped at ``LOG_FLOOR``."""
    x = as_tensor(x)
    clamped = np.maximum(x.data, LOG_FLOOR)

    def backward(g):
        return (np.where(x.data > LOG_FLOOR, g / clamped, 0.0),)

    return make("log", np.log(clamped), (x,), backward)


# -- reductions and structure -------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make("sum", out, (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.size / max(np.size(out), 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return make("mean", out, (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise _shape_error("concat", *tensors, detail=str(exc)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        parts = np.split(g, bounds, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, tensors))

    return make("concat", out, tuple(tensors), backward)


def stack(tensors, axis=0):
    """Join same-shaped tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise _shape_error("stack", *tensors, detail=str(exc)) from None

    def backward(g):
        return tuple(
            np.take(g, i, axis=axis) if t.requires_grad else None
            for i, t in enumerate(tensors)
        )

    return make("stack", out, tuple(tensors), backward)


_BASIC = (slice, int, np.integer, type(None), type(Ellipsis))


def _is_basic_index(index):
    if isinstance(index, tuple):
        return all(isinstance(i, _BASIC) for i in index)
    return isinstance(index, _BASIC)


def slice_(x, index):
    x = as_tensor(x)
    try:
        out = x.data[index]
    except IndexError as exc:
        raise _shape_error("slice", x, detail=str(exc)) from None
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make("slice", np.asarray(out, dtype=DTYPE), (x,), backward)


# -- recurrent cell -------------------------------------------------------------

def gru_cell(x, h, w_in, b_in, w_h, b_h):
    """Fused GRU update; gate packing along the last axis is (reset, update, candidate).

    Equivalent to composing linear/sigmoid/tanh/mul/add, but records a single
    node per step, which matters for long sequences.
    """
    x, h = as_tensor(x), as_tensor(h)
    hsz = h.shape[1]
    if (w_in.shape != (x.shape[1], 3 * hsz) or w_h.shape != (hsz, 3 * hsz)
            or x.shape[0] != h.shape[0]):
        raise _shape_error("gru_cell", x, h, w_in, w_h)
    gx = x.data @ w_in.data
    gx += b_in.data
    gh = h.data @ w_h.data
    gh += b_h.data
    pre = gx[:, :2 * hsz] + gh[:, :2 * hsz]
    rz = np.tanh(0.5 * pre)
    rz += 1.0
    rz *= 0.5
    r = rz[:, :hsz]
    z = rz[:, hsz:]
    ghn = gh[:, 2 * hsz:]
    n = np.tanh(gx[:, 2 * hsz:] + r * ghn)
    out = n + z * (h.data - n)

    def backward(g):
        dn_pre = g * (1.0 - z) * (1.0 - n * n)
        dz = g * (h.data - n)
        dr = dn_pre * ghn
        drz = np.concatenate([dr, dz], axis=1)
        drz *= rz * (1.0 - rz)
        dgx = np.concatenate([drz, dn_pre], axis=1)
        dgh = np.concatenate([drz, dn_pre * r], axis=1)
        dx = dgx @ w_in.data.T if x.requires_grad else None
        dh = g * z + dgh @ w_h.data.T if h.requires_grad else None
        return (
            dx,
            dh,
            x.data.T @ dgx if w_in.requires_grad else None,
            dgx.sum(axis=0) if b_in.requires_grad else None,
            h.data.T @ dgh if w_h.requires_grad else None,
            dgh.sum(axis=0) if b_h.requires_grad else None,
        )

    return make("gru_cell", out, (x, h, w_in, b_in, w_h, b_h), backward)


# -- convolution and pooling --------------------------------------------------

def _im2col(x, kh, kw, stride, padding):
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, oh, ow, c, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return cols.reshape(n * oh * ow, c * kh * kw), oh, ow


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation on NCHW input with an OIHW kernel."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise _shape_error("conv2d", x, weight)
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise _shape_error("conv2d", x, weight, detail="kernel larger than input")
    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        inputs.append(bias)
    out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gx = None
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(n, oh, ow, c, kh, kw)
            padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=DTYPE)
            for i in range(kh):
                for j in range(kw):
                    padded[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = padded[:, :, padding:padding + h, padding:padding + w]
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(gm.sum(axis=0) if bias.requires_grad else None)
        return tuple(grads)

    return make("conv2d", np.ascontiguousarray(out), tuple(inputs), backward)


def global_avg_pool(x):
    """Mean over spatial axes of NCHW maps; flat (N, F) features pass through."""
    x = as_tensor(x)
    if x.ndim == 2:
        return x
    if x.ndim != 4:
        raise _shape_error("global_avg_pool", x, detail="expected (N,F) or (N,C,H,W)")
    hw = x.shape[2] * x.shape[3]

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / hw, x.shape).copy(),)

    return make("global_avg_pool", x.data.mean(axis=(2, 3)), (x,), backward)


# -- per-sample losses --------------------------------------------------------

def squared_error(pred, target):
    """Per-sample ``(pred - target)**2``; ``target`` is treated as a constant."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=DTYPE)
    if pred.shape != target.shape:
        raise _shape_error("squared_error", pred, Tensor(target))
    diff = pred.data - target
    return make("squared_error", diff * diff, (pred,), lambda g: (2.0 * g * diff,))


def cross_entropy(logits, labels):
    """Per-sample cross-entropy of (N, C) logits against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise _shape_error("cross_entropy", logits, Tensor(labels.astype(DTYPE)))
    n, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    rows = np.arange(n)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    log_p = z - logsum[:, None]
    out = -log_p[rows, labels]

    def backward(g):
        p = np.exp(log_p)
        p[rows, labels] -= 1.0
        return (p * g[:, None],)

    return make("cross_entropy", out, (logits,), backward)


def linear(x, weight, bias):
    return add(matmul(x, weight), bias)
