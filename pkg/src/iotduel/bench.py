"""Micro-benchmark comparing the compiled and NumPy kernel backends."""

from __future__ import annotations

import time

import numpy as np

from .agent import AgentHyperparams, DrqnAgent, Experience, train_step
from .nn import backend


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _synthetic_batch(obs_dim: int, batch: int, seq_len: int, rng) -> list[list[Experience]]:
    out = []
    for b in range(batch):
        seq = []
        for t in range(seq_len):
            seq.append(
                Experience(
                    observation=rng.random(obs_dim),
                    action=int(rng.integers(2)),
                    reward=float(rng.normal()),
                    next_observation=rng.random(obs_dim),
                    done=t == seq_len - 1,
                    episode_id=b,
                    step_index=t,
                )
            )
        out.append(seq)
    return out


def run_benchmark(repeats: int = 5, obs_dim: int = 31, batch: int = 32, seq_len: int = 8) -> list[dict]:
    """Time the LSTM kernels and a full training update on every backend.

    Returns one row per (operation, backend) with the best-of-N seconds.
    """
    rng = np.random.default_rng(1234)
    T, B, I, H = seq_len, batch, 64, 32
    x = rng.normal(size=(T, B, I))
    wx = rng.normal(size=(I, 4 * H)) * 0.2
    wh = rng.normal(size=(H, 4 * H)) * 0.2
    bias = np.zeros(4 * H)
    h0 = np.zeros((B, H))
    c0 = np.zeros((B, H))
    dh = rng.normal(size=(T, B, H))

    rows = []
    original = backend.active_name()
    try:
        for name in backend.available_backends():
            backend.use_backend(name)
            cache = backend.lstm_forward(x, wx, wh, bias, h0, c0)
            fwd = _time(lambda: backend.lstm_forward(x, wx, wh, bias, h0, c0), repeats)
            bwd = _time(
                lambda: backend.lstm_backward(dh, x, *cache, wx, wh, h0, c0),
                repeats,
            )
            agent = DrqnAgent(obs_dim, "attack", AgentHyperparams(), seed=7)
            batch_data = _synthetic_batch(obs_dim, batch, seq_len, np.random.default_rng(7))
            train_step(agent, batch_data)  # warm up
            step = _time(lambda: train_step(agent, batch_data), repeats)
            rows.append({"backend": name, "lstm_forward_s": fwd, "lstm_backward_s": bwd, "train_step_s": step})
    finally:
        backend.use_backend(original)
    return rows


def format_benchmark(rows: list[dict]) -> str:
    lines = [f"{'backend':<10} {'lstm_forward':>14} {'lstm_backward':>14} {'train_step':>12}"]
    for row in rows:
        lines.append(
            f"{row['backend']:<10} {row['lstm_forward_s'] * 1e3:>12.3f}ms "
            f"{row['lstm_backward_s'] * 1e3:>12.3f}ms {row['train_step_s'] * 1e3:>10.3f}ms"
        )
    if len(rows) == 2:
        by = {r["backend"]: r for r in rows}
        if {"numpy", "cython"} <= by.keys():
            speedup = by["numpy"]["train_step_s"] / by["cython"]["train_step_s"]
            lines.append(f"cython train_step speedup over numpy: {speedup:.2f}x")
    return "\n".join(lines)
