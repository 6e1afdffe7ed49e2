"""SGD with momentum and Adam over lists of Parameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient in parameter {name!r}; step aborted")
        self.parameter = name


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 0.0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "sgd-momentum", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


def sgd_state(lr=0.1, momentum=0.9, weight_decay=5e-4):
    return OptimizerState(kind="sgd-momentum", lr=lr, momentum=momentum, weight_decay=weight_decay)


def adam_state(lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    return OptimizerState(kind="adam", lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)


def optimizer_step(state, params):
    """Apply one update in place using each parameter's ``.grad``.

    All gradients are validated before anything is modified, so a non-finite
    gradient leaves every parameter and buffer untouched.
    """
    for p in params:
        if p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(p.name)
    state.step_count += 1
    t = state.step_count
    for p in params:
        if p.grad is None:
            continue
        g = p.grad
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        if state.kind == "adam":
            m, v = state.buffers.get(p.name, (None, None))
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            b1, b2 = state.betas
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            state.buffers[p.name] = (m, v)
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        else:
            if state.momentum:
                buf = state.buffers.get(p.name)
                buf = g.copy() if buf is None else state.momentum * buf + g
                state.buffers[p.name] = buf
                g = buf
            p.data -= state.lr * g


class Optimizer:
    """Binds an OptimizerState to a fixed parameter list."""

    def __init__(self, params, state):
        self.params = list(params)
        self.state = state
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter identifiers must be unique")

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        optimizer_step(self.state, self.params)

    def set_lr(self, lr):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.state.lr = lr
