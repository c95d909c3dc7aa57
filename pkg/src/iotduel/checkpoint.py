"""Deterministic agent checkpoints.

Layout: magic, 8-byte little-endian header length, a sorted-keys JSON header
(layer specs, hyperparameters, epsilon, optimizer timesteps, rng state, and
an array manifest), then the raw float64 C-order bytes of every array in
manifest order.  No timestamps anywhere, so identical runs produce identical
files.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .agent import AgentHyperparams, DrqnAgent

MAGIC = b"IOTDUEL1"
CHECKPOINT_FORMAT = 1


class CheckpointMismatch(ValueError):
    """Checkpoint contents do not match the expected architecture."""


def _agent_arrays(agent: DrqnAgent) -> list[tuple[str, np.ndarray]]:
    arrays: list[tuple[str, np.ndarray]] = []
    arrays.extend((f"online.{n}", p) for n, p in agent.online.parameters())
    arrays.extend((f"target.{n}", p) for n, p in agent.target.parameters())
    arrays.extend((f"adam.m.{i}", m) for i, m in enumerate(agent.adam.m))
    arrays.extend((f"adam.v.{i}", v) for i, v in enumerate(agent.adam.v))
    arrays.extend((f"opponent.{n}", p) for n, p in agent.opponent.net.parameters())
    arrays.extend((f"opp_adam.m.{i}", m) for i, m in enumerate(agent.opponent.adam.m))
    arrays.extend((f"opp_adam.v.{i}", v) for i, v in enumerate(agent.opponent.adam.v))
    return arrays


def save_agent(agent: DrqnAgent, path: str | Path) -> None:
    arrays = _agent_arrays(agent)
    header = {
        "format": CHECKPOINT_FORMAT,
        "role": agent.role,
        "obs_dim": agent.obs_dim,
        "hyperparams": dataclasses.asdict(agent.hp),
        "online_spec": agent.online.spec(),
        "opponent_spec": agent.opponent.net.spec(),
        "epsilon": agent.schedule.epsilon,
        "train_steps": agent.train_steps,
        "adam_t": agent.adam.t,
        "opp_adam_t": agent.opponent.adam.t,
        "rng_state": agent.rng.bit_generator.state,
        "manifest": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_agent(path: str | Path, expected_obs_dim: int | None = None) -> DrqnAgent:
    """Rebuild an agent from a checkpoint, validating the shape manifest."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointMismatch(f"{path} is not an agent checkpoint")
    offset = len(MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatch(f"unsupported checkpoint format {header.get('format')!r}")
    if expected_obs_dim is not None and header["obs_dim"] != expected_obs_dim:
        raise CheckpointMismatch(
            f"checkpoint observation dim {header['obs_dim']} != expected {expected_obs_dim}"
        )

    hp = AgentHyperparams(**header["hyperparams"])
    agent = DrqnAgent(header["obs_dim"], header["role"], hp, seed=0)
    if [list(s) for s in agent.online.spec()] != header["online_spec"]:
        raise CheckpointMismatch(
            f"architecture mismatch: {agent.online.spec()} != {header['online_spec']}"
        )
    if [list(s) for s in agent.opponent.net.spec()] != header["opponent_spec"]:
        raise CheckpointMismatch("opponent model architecture mismatch")

    arrays = _agent_arrays(agent)
    if [m["name"] for m in header["manifest"]] != [n for n, _ in arrays]:
        raise CheckpointMismatch("array manifest does not match the expected layout")
    for meta, (name, dst) in zip(header["manifest"], arrays):
        shape = tuple(meta["shape"])
        if shape != dst.shape:
            raise CheckpointMismatch(f"{name}: stored shape {shape} != expected {dst.shape}")
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointMismatch(f"{name}: checkpoint truncated")
        dst[...] = np.frombuffer(raw[offset : offset + nbytes], dtype=np.float64).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointMismatch("trailing bytes after the last array")

    agent.schedule.epsilon = header["epsilon"]
    agent.train_steps = header["train_steps"]
    agent.adam.t = header["adam_t"]
    agent.opponent.adam.t = header["opp_adam_t"]
    agent.rng.bit_generator.state = header["rng_state"]
    return agent
