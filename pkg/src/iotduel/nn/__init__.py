"""From-scratch neural kernel: dense + LSTM layers, BPTT, Adam, losses.

Hot LSTM kernels run on a compiled Cython backend when the extension built,
with a pure-NumPy fallback selected automatically (see :mod:`.backend`).
"""

from . import backend
from .adam import AdamState, adam_step, clip_global_norm
from .gradcheck import grad_check, relu_kink_margin
from .layers import (
    Activation,
    Dense,
    Lstm,
    MissingCache,
    Network,
    ShapeMismatch,
    build_opponent_network,
    build_q_network,
    clone_network,
)
from .losses import EmptyMask, mse_loss, softmax, softmax_cross_entropy

__all__ = [
    "Activation",
    "AdamState",
    "Dense",
    "EmptyMask",
    "Lstm",
    "MissingCache",
    "Network",
    "ShapeMismatch",
    "adam_step",
    "backend",
    "build_opponent_network",
    "build_q_network",
    "clip_global_norm",
    "clone_network",
    "grad_check",
    "mse_loss",
    "relu_kink_margin",
    "softmax",
    "softmax_cross_entropy",
]
