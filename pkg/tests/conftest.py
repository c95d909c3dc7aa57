"""Shared graph builders for the test suite."""

from __future__ import annotations

import os

# The duel's matrices are tiny: BLAS thread fan-out only adds sync overhead
# and timing jitter (which the overhead-stability criterion measures).  Must
# be set before numpy/scipy load their BLAS.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import pytest

from iotduel.scenario import AttackGraph, EventCondition, Exploit, validate_graph


def make_graph(n, exploits, root=0, goals=None, chain=None, critical=(), names=None):
    conditions = tuple(
        EventCondition(i, names[i] if names else f"event_{i}", i in critical) for i in range(n)
    )
    exploit_objs = tuple(
        Exploit(idx, frozenset(pre), eff, prob)
        for idx, (pre, eff, prob) in enumerate(exploits)
    )
    return AttackGraph(
        conditions=conditions,
        exploits=exploit_objs,
        root=root,
        goal_candidates=frozenset(goals or []),
        chain=tuple(chain or []),
    )


def chain_graph(n: int, critical: tuple[int, ...] = (), prob: float = 1.0) -> AttackGraph:
    """Pure chain 0 -> 1 -> ... -> n-1 with the last condition as the goal."""
    exploits = [({i}, i + 1, prob) for i in range(n - 1)]
    g = make_graph(n, exploits, goals={n - 1}, chain=range(n), critical=critical)
    assert validate_graph(g).ok
    return g


def diamond_graph() -> AttackGraph:
    """Two parallel branches: 0 -> {1, 2} -> 3 (goal); chain runs through 1."""
    exploits = [({0}, 1, 1.0), ({0}, 2, 1.0), ({1}, 3, 1.0), ({2}, 3, 1.0)]
    g = make_graph(4, exploits, goals={3}, chain=[0, 1, 3])
    assert validate_graph(g).ok
    return g


def diamond6_graph() -> AttackGraph:
    """Deeper diamond: 0 -> 1 -> 3 -> 5 and 0 -> 2 -> 4 -> 5; chain on the
    left branch."""
    exploits = [
        ({0}, 1, 1.0),
        ({0}, 2, 1.0),
        ({1}, 3, 1.0),
        ({2}, 4, 1.0),
        ({3}, 5, 1.0),
        ({4}, 5, 1.0),
    ]
    g = make_graph(6, exploits, goals={5}, chain=[0, 1, 3, 5])
    assert validate_graph(g).ok
    return g


def and_graph() -> AttackGraph:
    """5 conditions with one multi-precondition exploit: {1, 2} -> 3 -> 4."""
    exploits = [
        ({0}, 1, 1.0),
        ({0}, 2, 1.0),
        ({1, 2}, 3, 1.0),
        ({3}, 4, 1.0),
    ]
    g = make_graph(5, exploits, goals={4}, chain=[0, 1, 3, 4])
    assert validate_graph(g).ok
    return g


def small_fixture_graphs() -> list[AttackGraph]:
    """Every fixture graph with at most 5 conditions (terminal ground-truth suite)."""
    return [
        chain_graph(2),
        chain_graph(3),
        chain_graph(4),
        chain_graph(5),
        diamond_graph(),
        and_graph(),
    ]


@pytest.fixture
def chain8() -> AttackGraph:
    return chain_graph(8)


@pytest.fixture
def diamond() -> AttackGraph:
    return diamond_graph()


@pytest.fixture
def diamond6() -> AttackGraph:
    return diamond6_graph()
