"""Dense and LSTM layers with exact backpropagation, stacked into networks.

Everything is float64 and time-major: training passes take [T, B, dim]
sequences, recurrent state starts at zero for every sequence, and a separate
``step`` path threads explicit (h, c) carries for streaming rollouts.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import backend


class ShapeMismatch(ValueError):
    pass


class MissingCache(RuntimeError):
    """backward() called without a preceding forward()."""


class Activation(Enum):
    RELU = "relu"
    TANH = "tanh"
    LINEAR = "linear"


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    """Affine layer ``y = act(x @ w + b)`` applied per timestep."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        activation: Activation = Activation.RELU,
        rng: np.random.Generator | None = None,
        zero_init: bool = False,
    ):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        if zero_init:
            self.w = np.zeros((in_dim, out_dim))
        else:
            if rng is None:
                raise ValueError("rng required unless zero_init")
            self.w = glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim))
        self.b = np.zeros(out_dim)
        self.grads: dict[str, np.ndarray] = {}
        self._cache: tuple[np.ndarray, np.ndarray] | None = None

    def spec(self) -> tuple:
        return ("dense", self.in_dim, self.out_dim, self.activation.value)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [("w", self.w), ("b", self.b)]

    def _apply(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = x @ self.w + self.b
        if self.activation is Activation.RELU:
            return z, np.maximum(z, 0.0)
        if self.activation is Activation.TANH:
            return z, np.tanh(z)
        return z, z

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatch(f"dense expects [..., {self.in_dim}], got {x.shape}")
        z, y = self._apply(x)
        self._cache = (x, z)
        return y

    def infer(self, x: np.ndarray) -> np.ndarray:
        """forward without touching the training cache."""
        return self._apply(x)[1]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise MissingCache("dense backward before forward")
        x, z = self._cache
        if self.activation is Activation.RELU:
            dz = dy * (z > 0.0)
        elif self.activation is Activation.TANH:
            t = np.tanh(z)
            dz = dy * (1.0 - t * t)
        else:
            dz = dy
        flat_x = x.reshape(-1, self.in_dim)
        flat_dz = dz.reshape(-1, self.out_dim)
        self.grads = {"w": flat_x.T @ flat_dz, "b": flat_dz.sum(axis=0)}
        return dz @ self.w.T


class Lstm:
    """Single LSTM layer with fused gate weights (input/forget/candidate/output).

    Standard recurrence: sigmoid gates, tanh candidate and output squashing.
    Forget-gate bias starts at 1.0.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.hidden = hidden
        self.wx = glorot_uniform(rng, in_dim, 4 * hidden, (in_dim, 4 * hidden))
        self.wh = glorot_uniform(rng, hidden, 4 * hidden, (hidden, 4 * hidden))
        self.b = np.zeros(4 * hidden)
        self.b[hidden : 2 * hidden] = 1.0
        self.grads: dict[str, np.ndarray] = {}
        self._cache: tuple | None = None

    def spec(self) -> tuple:
        return ("lstm", self.in_dim, self.hidden)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [("wx", self.wx), ("wh", self.wh), ("b", self.b)]

    def zero_carry(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((batch, self.hidden)), np.zeros((batch, self.hidden))

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise ShapeMismatch(f"lstm expects [T, B, {self.in_dim}], got {x.shape}")
        x = np.ascontiguousarray(x)
        h0, c0 = self.zero_carry(x.shape[1])
        h_seq, c_seq, gates, tanh_c = backend.lstm_forward(x, self.wx, self.wh, self.b, h0, c0)
        self._cache = (x, h_seq, c_seq, gates, tanh_c, h0, c0)
        return h_seq

    def infer_step(
        self, x: np.ndarray, carry: tuple[np.ndarray, np.ndarray] | None
    ) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
        if carry is None:
            carry = self.zero_carry(x.shape[0])
        h0, c0 = carry
        x3 = np.ascontiguousarray(x[None, :, :])
        h_seq, c_seq, _, _ = backend.lstm_forward(x3, self.wx, self.wh, self.b, h0, c0)
        return h_seq[0], (h_seq[0], c_seq[0])

    def backward(self, dh: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise MissingCache("lstm backward before forward")
        x, h_seq, c_seq, gates, tanh_c, h0, c0 = self._cache
        dh = np.ascontiguousarray(dh)
        dx, dwx, dwh, db = backend.lstm_backward(
            dh, x, h_seq, c_seq, gates, tanh_c, self.wx, self.wh, h0, c0
        )
        self.grads = {"wx": dwx, "wh": dwh, "b": db}
        return dx


class Network:
    """Ordered layer stack over [T, B, dim] sequences."""

    def __init__(self, layers: list):
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        last = self.layers[-1]
        return last.out_dim if isinstance(last, Dense) else last.hidden

    def spec(self) -> list[tuple]:
        return [layer.spec() for layer in self.layers]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise ShapeMismatch(f"network forward expects [T, B, dim], got {x.shape}")
        out = x
        for layer in self.layers:
            out = layer.forward(out)
        return out

    def forward_sequence(self, seq: np.ndarray) -> np.ndarray:
        """Single unbatched sequence: [T, dim] -> [T, out_dim]."""
        return self.forward(np.asarray(seq, dtype=np.float64)[:, None, :])[:, 0, :]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        grad = dout
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def init_carries(self, batch: int = 1) -> list:
        return [layer.zero_carry(batch) if isinstance(layer, Lstm) else None for layer in self.layers]

    def step(self, x: np.ndarray, carries: list) -> tuple[np.ndarray, list]:
        """One streaming timestep: x is [B, dim]; carries as from init_carries."""
        out = x
        new_carries = []
        for layer, carry in zip(self.layers, carries):
            if isinstance(layer, Lstm):
                out, new_carry = layer.infer_step(out, carry)
                new_carries.append(new_carry)
            else:
                out = layer.infer(out)
                new_carries.append(None)
        return out, new_carries

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"{i}.{name}", arr) for name, arr in layer.parameters())
        return out

    def gradients(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, _ in layer.parameters():
                if name not in layer.grads:
                    raise MissingCache(f"layer {i} has no gradient for {name}")
                out.append((f"{i}.{name}", layer.grads[name]))
        return out

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.parameters())

    def set_parameters(self, values: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ShapeMismatch(f"expected {len(params)} arrays, got {len(values)}")
        for (_, dst), src in zip(params, values):
            if dst.shape != src.shape:
                raise ShapeMismatch(f"shape {src.shape} != expected {dst.shape}")
            dst[...] = src


def clone_network(net: Network) -> Network:
    """Deep parameter copy; the clone never aliases the source arrays."""
    clone_layers = []
    for layer in net.layers:
        if isinstance(layer, Dense):
            twin = Dense.__new__(Dense)
            twin.in_dim, twin.out_dim, twin.activation = layer.in_dim, layer.out_dim, layer.activation
            twin.w = layer.w.copy()
            twin.b = layer.b.copy()
            twin.grads, twin._cache = {}, None
        else:
            twin = Lstm.__new__(Lstm)
            twin.in_dim, twin.hidden = layer.in_dim, layer.hidden
            twin.wx = layer.wx.copy()
            twin.wh = layer.wh.copy()
            twin.b = layer.b.copy()
            twin.grads, twin._cache = {}, None
        clone_layers.append(twin)
    return Network(clone_layers)


def build_q_network(input_dim: int, rng: np.random.Generator, action_dim: int = 2) -> Network:
    """The duel's Q-network stack: Dense 64 -> LSTM 32 -> LSTM 32 -> Dense 16
    -> linear head over the 2 actions."""
    return Network(
        [
            Dense(input_dim, 64, Activation.RELU, rng),
            Lstm(64, 32, rng),
            Lstm(32, 32, rng),
            Dense(32, 16, Activation.RELU, rng),
            Dense(16, action_dim, Activation.LINEAR, rng),
        ]
    )


def build_opponent_network(input_dim: int, hidden: int, rng: np.random.Generator) -> Network:
    """Small recurrent classifier head; zero-initialized output layer so the
    untrained model predicts the uniform distribution."""
    return Network(
        [
            Lstm(input_dim, hidden, rng),
            Dense(hidden, 2, Activation.LINEAR, rng=None, zero_init=True),
        ]
    )
