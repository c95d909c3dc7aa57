"""Kernel backend selection: compiled Cython when available, NumPy otherwise.

Override with the ``IOTDUEL_BACKEND`` environment variable or
:func:`use_backend`.  The active backend name is recorded in run headers so
a metrics log always states which kernels produced it.
"""

from __future__ import annotations

import os

from . import kernels_numpy

_BACKENDS = {"numpy": kernels_numpy}

try:
    from . import _kernels as _compiled

    _BACKENDS["cython"] = _compiled
except ImportError:
    _compiled = None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _default_backend() -> str:
    requested = os.environ.get("IOTDUEL_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise RuntimeError(
                f"IOTDUEL_BACKEND={requested!r} unavailable; have {available_backends()}"
            )
        return requested
    return "cython" if "cython" in _BACKENDS else "numpy"


_active = _BACKENDS[_default_backend()]


def use_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    _active = _BACKENDS[name]


def active_name() -> str:
    return _active.NAME


def lstm_forward(x, wx, wh, b, h0, c0):
    return _active.lstm_forward(x, wx, wh, b, h0, c0)


def lstm_backward(dh_out, x, h_seq, c_seq, gates, tanh_c, wx, wh, h0, c0):
    return _active.lstm_backward(dh_out, x, h_seq, c_seq, gates, tanh_c, wx, wh, h0, c0)
