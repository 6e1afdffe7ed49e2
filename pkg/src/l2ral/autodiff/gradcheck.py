"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor

STEP = 1e-5
FLOOR = 1e-8


def finite_difference_check(fn, inputs, step=STEP):
    """Max relative error between tape gradients and central differences.

    ``fn`` maps the given tensors to a scalar tensor. Every input with
    ``requires_grad`` is perturbed elementwise; the error per element is
    ``|analytic - numeric| / max(|numeric|, 1e-8)``.
    """
    inputs = [x if isinstance(x, Tensor) else Tensor(x, requires_grad=True) for x in inputs]
    for x in inputs:
        x.grad = None
    with Tape() as tape:
        out = fn(*inputs)
    tape.backward(out)

    worst = 0.0
    for x in inputs:
        if not x.requires_grad:
            continue
        x.data = np.require(x.data, requirements="C")
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad
        flat = x.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn(*inputs).data.item()
            flat[i] = orig - step
            lo = fn(*inputs).data.item()
            flat[i] = orig
            numeric = (hi - lo) / (2 * step)
            err = abs(analytic.reshape(-1)[i] - numeric) / max(abs(numeric), FLOOR)
            worst = max(worst, err)
    return worst
