"""Self-contained differentiable kernel: parameter store, Glorot init,
GRU/LSTM cells with full backpropagation through time, the paired-sigmoid
output layer, dropout, the two losses, and Adam."""

from .params import AdamState, Param, ParamStore, adam_step, clip_global_norm, glorot_uniform
from .recurrent import GruCell, LstmCell
from .ops import (
    Mode,
    bce_loss,
    dropout,
    mse_loss,
    output_probability,
    output_probability_vjp,
    sigmoid,
)

__all__ = [
    "AdamState",
    "Param",
    "ParamStore",
    "adam_step",
    "clip_global_norm",
    "glorot_uniform",
    "GruCell",
    "LstmCell",
    "Mode",
    "bce_loss",
    "dropout",
    "mse_loss",
    "output_probability",
    "output_probability_vjp",
    "sigmoid",
]
