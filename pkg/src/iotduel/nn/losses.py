"""Loss functions returning (scalar, gradient-wrt-prediction)."""

from __future__ import annotations

import numpy as np

from .layers import ShapeMismatch


class EmptyMask(ValueError):
    pass


def mse_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over masked entries only.

    grad = 2 (pred - target) / count on the masked entries, 0 elsewhere.
    """
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ShapeMismatch(f"shapes differ: {pred.shape}, {target.shape}, {mask.shape}")
    count = float(np.sum(mask))
    if count == 0:
        raise EmptyMask("mask selects no entries")
    diff = (pred - target) * mask
    loss = float(np.sum(diff * diff)) / count
    grad = 2.0 * diff / count
    return loss, grad


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer labels.

    logits: [N, K]; labels: [N] ints.  grad is w.r.t. the logits.
    """
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"bad shapes: logits {logits.shape}, labels {labels.shape}")
    n = logits.shape[0]
    probs = softmax(logits)
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
