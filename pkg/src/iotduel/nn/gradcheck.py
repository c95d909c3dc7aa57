"""Finite-difference verification of the analytic backward pass."""

from __future__ import annotations

import numpy as np

from .layers import Activation, Dense, Network


def _loss_and_grad(net: Network, x: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    out = net.forward(x)
    diff = out - target
    return 0.5 * float(np.sum(diff * diff)), diff


def grad_check(
    net: Network,
    x: np.ndarray,
    h: float = 1e-5,
    target: np.ndarray | None = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Uses the quadratic loss 0.5 * sum((out - target)^2).  The relative error
    denominator is floored at 1e-3 so near-zero gradients are compared on an
    absolute scale instead of amplifying finite-difference roundoff.
    """
    if not 0.0 < h <= 1e-3:
        raise ValueError(f"h must be in (0, 1e-3], got {h}")
    x = np.asarray(x, dtype=np.float64)
    if target is None:
        out = net.forward(x)
        target = np.zeros_like(out)

    _, dout = _loss_and_grad(net, x, target)
    net.backward(dout)
    analytic = {name: g.copy() for name, g in net.gradients()}

    worst = 0.0
    for name, param in net.parameters():
        a = analytic[name]
        flat = param.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            plus, _ = _loss_and_grad(net, x, target)
            flat[idx] = orig - h
            minus, _ = _loss_and_grad(net, x, target)
            flat[idx] = orig
            numeric = (plus - minus) / (2.0 * h)
            a_val = a.reshape(-1)[idx]
            rel = abs(a_val - numeric) / max(abs(a_val) + abs(numeric), 1e-3)
            worst = max(worst, rel)
    return worst


def relu_kink_margin(net: Network, x: np.ndarray) -> float:
    """Smallest |pre-activation| over all ReLU units for this input.

    Finite differences are invalid within ~h of a ReLU kink; callers resample
    inputs until this margin comfortably exceeds the step size.
    """
    net.forward(np.asarray(x, dtype=np.float64))
    margin = np.inf
    for layer in net.layers:
        if isinstance(layer, Dense) and layer.activation is Activation.RELU and layer._cache:
            _, z = layer._cache
            margin = min(margin, float(np.min(np.abs(z))))
    return margin
