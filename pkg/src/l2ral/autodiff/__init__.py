"""A small reverse-mode autodiff engine over numpy float64 arrays."""
from .gradcheck import finite_difference_check
from .ops import (
    add, concat, conv2d, cross_entropy, div, global_avg_pool, gru_cell, leaky_relu, linear, log,
    matmul, mean, mul, neg, relu, sigmoid, slice_, softmax, squared_error, stack, sub, sum_, tanh,
)
from .optim import NonFiniteGradient, Optimizer, OptimizerState, adam_state, optimizer_step, sgd_state
from .tensor import (
    Parameter, ShapeError, Tape, TapeError, Tensor, active_tape, backpropagate, evaluate,
)

__all__ = [
    "Parameter", "ShapeError", "Tape", "TapeError", "Tensor", "active_tape", "backpropagate",
    "evaluate", "finite_difference_check", "NonFiniteGradient", "Optimizer", "OptimizerState",
    "adam_state", "optimizer_step", "sgd_state", "add", "concat", "conv2d", "cross_entropy",
    "div", "global_avg_pool", "gru_cell", "leaky_relu", "linear", "log", "matmul", "mean", "mul", "neg",
    "relu", "sigmoid", "slice_", "softmax", "squared_error", "stack", "sub", "sum_", "tanh",
]
