"""Pure-NumPy LSTM sequence kernels (fallback backend).

Time-major layout throughout: sequences are [T, B, dim].  Gate activations
are returned post-nonlinearity in the fused order [input, forget, candidate,
output] so the backward pass needs no pre-activation cache.  Input-side and
parameter matmuls are batched over all timesteps; only the recurrent matmul
stays in the time loop.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def lstm_forward(x, wx, wh, b, h0, c0):
    """Run an LSTM over a [T, B, I] sequence.

    Returns (h_seq [T,B,H], c_seq [T,B,H], gates [T,B,4H], tanh_c [T,B,H]);
    the cached tanh(c) spares the backward pass any transcendentals.
    """
    T, B, I = x.shape
    H = wh.shape[0]
    h_seq = np.empty((T, B, H), dtype=np.float64)
    c_seq = np.empty((T, B, H), dtype=np.float64)
    gates = np.empty((T, B, 4 * H), dtype=np.float64)
    tanh_c = np.empty((T, B, H), dtype=np.float64)
    xpre = x.reshape(T * B, I) @ wx
    xpre = xpre.reshape(T, B, 4 * H) + b
    h, c = h0, c0
    for t in range(T):
        pre = xpre[t] + h @ wh
        gi = _sigmoid(pre[:, :H])
        gf = _sigmoid(pre[:, H : 2 * H])
        gg = np.tanh(pre[:, 2 * H : 3 * H])
        go = _sigmoid(pre[:, 3 * H :])
        c = gf * c + gi * gg
        tc = np.tanh(c)
        h = go * tc
        gates[t, :, :H] = gi
        gates[t, :, H : 2 * H] = gf
        gates[t, :, 2 * H : 3 * H] = gg
        gates[t, :, 3 * H :] = go
        h_seq[t] = h
        c_seq[t] = c
        tanh_c[t] = tc
    return h_seq, c_seq, gates, tanh_c


def lstm_backward(dh_out, x, h_seq, c_seq, gates, tanh_c, wx, wh, h0, c0):
    """Exact reverse-mode pass through the full sequence.

    Returns (dx [T,B,I], dwx, dwh, db).
    """
    T, B, H = h_seq.shape
    I = x.shape[2]
    dpre = np.empty((T, B, 4 * H), dtype=np.float64)
    dh_carry = np.zeros((B, H), dtype=np.float64)
    dc = np.zeros((B, H), dtype=np.float64)
    for t in range(T - 1, -1, -1):
        gi = gates[t, :, :H]
        gf = gates[t, :, H : 2 * H]
        gg = gates[t, :, 2 * H : 3 * H]
        go = gates[t, :, 3 * H :]
        dh = dh_out[t] + dh_carry
        tc = tanh_c[t]
        do = tc * dh
        dc = dc + (1.0 - tc * tc) * go * dh
        c_prev = c_seq[t - 1] if t > 0 else c0
        dpre[t, :, :H] = gi * (1.0 - gi) * (gg * dc)
        dpre[t, :, H : 2 * H] = gf * (1.0 - gf) * (c_prev * dc)
        dpre[t, :, 2 * H : 3 * H] = (1.0 - gg * gg) * (gi * dc)
        dpre[t, :, 3 * H :] = go * (1.0 - go) * do
        dh_carry = dpre[t] @ wh.T
        dc = gf * dc
    h_prev = np.concatenate([h0[None], h_seq[:-1]], axis=0)
    flat_dpre = dpre.reshape(T * B, 4 * H)
    dwx = x.reshape(T * B, I).T @ flat_dpre
    dwh = h_prev.reshape(T * B, H).T @ flat_dpre
    db = flat_dpre.sum(axis=0)
    dx = (flat_dpre @ wx.T).reshape(T, B, I)
    return dx, dwx, dwh, db
