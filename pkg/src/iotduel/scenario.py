"""Attack-graph world model: event conditions linked by exploits.

A scenario is a DAG whose nodes are event conditions and whose edges come
from exploits (each exploit needs a set of already-satisfied preconditions
and produces one new condition).  One designated ``chain`` of conditions from
the root to a goal candidate defines how attack progress is measured.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

SCENARIO_FORMAT_VERSION = 1


class ParseError(ValueError):
    """Scenario file is malformed or does not match the schema."""


class ValidationError(ValueError):
    """Graph violates a structural invariant; carries the full report."""

    def __init__(self, report: "ValidationReport"):
        super().__init__(str(report))
        self.report = report


class InvalidParams(ValueError):
    """Generator parameters outside their allowed ranges."""


@dataclass(frozen=True)
class EventCondition:
    """A device event that can act as a trigger; node of the attack graph."""

    id: int
    name: str
    availability_critical: bool = False


@dataclass(frozen=True)
class Exploit:
    """An injection opportunity: preconditions (all required) -> effect."""

    id: int
    preconditions: frozenset[int]
    effect: int
    success_prob: float = 1.0


@dataclass(frozen=True)
class Finding:
    code: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, code: str, detail: str) -> None:
        self.findings.append(Finding(code, detail))

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(str(f) for f in self.findings)


@dataclass(eq=False)
class AttackGraph:
    """Validated scenario graph.  Treat as immutable after construction."""

    conditions: tuple[EventCondition, ...]
    exploits: tuple[Exploit, ...]
    root: int
    goal_candidates: frozenset[int]
    chain: tuple[int, ...]

    @property
    def n_conditions(self) -> int:
        return len(self.conditions)

    @cached_property
    def edges(self) -> frozenset[tuple[int, int]]:
        """Condition-dependency edges (precondition -> effect) induced by exploits."""
        return frozenset(
            (pre, e.effect) for e in self.exploits for pre in e.preconditions
        )

    @cached_property
    def successors(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {c.id: [] for c in self.conditions}
        for pre, eff in sorted(self.edges):
            out[pre].append(eff)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def producers(self) -> dict[int, tuple[Exploit, ...]]:
        """Exploits that produce each condition, ordered by exploit id."""
        prod: dict[int, list[Exploit]] = {c.id: [] for c in self.conditions}
        for e in sorted(self.exploits, key=lambda e: e.id):
            prod[e.effect].append(e)
        return {k: tuple(v) for k, v in prod.items()}

    @cached_property
    def depth(self) -> dict[int, int]:
        """Longest edge-path length from the root; -1 if unreachable."""
        depth = {c.id: -1 for c in self.conditions}
        depth[self.root] = 0
        for cid in self.topological_order:
            if depth[cid] < 0:
                continue
            for succ in self.successors[cid]:
                depth[succ] = max(depth[succ], depth[cid] + 1)
        return depth

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        order, acyclic = _kahn_order({c.id for c in self.conditions}, self.edges)
        if not acyclic:
            raise ValidationError(validate_graph(self))
        return tuple(order)

    @cached_property
    def chain_index(self) -> dict[int, int]:
        return {cid: i for i, cid in enumerate(self.chain)}


def _kahn_order(nodes: set[int], edges: frozenset[tuple[int, int]]) -> tuple[list[int], bool]:
    """Kahn's counting topological sort; second value is False on a cycle."""
    indeg = {n: 0 for n in nodes}
    succ: dict[int, list[int]] = {n: [] for n in nodes}
    for a, b in sorted(edges):
        indeg[b] += 1
        succ[a].append(b)
    ready = sorted(n for n in nodes if indeg[n] == 0)
    order: list[int] = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for nxt in succ[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
        ready.sort()
    return order, len(order) == len(nodes)


def validate_graph(g: AttackGraph) -> ValidationReport:
    """Check every structural invariant; the report lists all violations."""
    report = ValidationReport()
    ids = [c.id for c in g.conditions]
    id_set = set(ids)

    if len(ids) != len(id_set):
        report.add("DuplicateConditionId", f"condition ids not unique: {sorted(ids)}")
    if sorted(id_set) != list(range(len(ids))):
        report.add("NonContiguousIds", f"condition ids must be 0..{len(ids) - 1}")
    for c in g.conditions:
        if not c.name:
            report.add("EmptyName", f"condition {c.id} has an empty name")

    exploit_ids = [e.id for e in g.exploits]
    if len(exploit_ids) != len(set(exploit_ids)):
        report.add("DuplicateExploitId", f"exploit ids not unique: {sorted(exploit_ids)}")
    for e in g.exploits:
        refs = set(e.preconditions) | {e.effect}
        missing = refs - id_set
        if missing:
            report.add("DanglingId", f"exploit {e.id} references unknown conditions {sorted(missing)}")
        if e.effect in e.preconditions:
            report.add("SelfLoop", f"exploit {e.id} has effect {e.effect} in its own preconditions")
        if not 0.0 < e.success_prob <= 1.0:
            report.add("BadProbability", f"exploit {e.id} success_prob {e.success_prob} not in (0, 1]")

    if g.root not in id_set:
        report.add("BadRoot", f"root {g.root} is not a condition id")
    if not g.goal_candidates:
        report.add("NoGoalCandidates", "goal candidate set is empty")

    # Invariants below need a sane id space to be meaningful.
    if report.codes() & {"DanglingId", "BadRoot", "DuplicateConditionId"}:
        return report

    edges = frozenset((pre, e.effect) for e in g.exploits for pre in e.preconditions)
    order, acyclic = _kahn_order(id_set, edges)
    if not acyclic:
        report.add("CycleDetected", "condition-dependency graph contains a cycle")
        return report

    succ: dict[int, list[int]] = {n: [] for n in id_set}
    for a, b in edges:
        succ[a].append(b)
    reachable = {g.root}
    frontier = [g.root]
    while frontier:
        node = frontier.pop()
        for nxt in succ[node]:
            if nxt not in reachable:
                reachable.add(nxt)
                frontier.append(nxt)

    leaves = {n for n in id_set if not succ[n]}
    for goal in sorted(g.goal_candidates):
        if goal not in id_set:
            report.add("DanglingId", f"goal candidate {goal} is not a condition id")
            continue
        if goal not in reachable:
            report.add("GoalUnreachable", f"goal candidate {goal} is not reachable from root {g.root}")
        if goal not in leaves:
            report.add("GoalNotLeaf", f"goal candidate {goal} has outgoing exploit edges")

    _validate_chain(g, edges, report)
    return report


def _validate_chain(g: AttackGraph, edges: frozenset[tuple[int, int]], report: ValidationReport) -> None:
    chain = g.chain
    if not chain:
        report.add("ChainBroken", "attack chain is empty")
        return
    if chain[0] != g.root:
        report.add("ChainBroken", f"chain starts at {chain[0]}, expected root {g.root}")
    if chain[-1] not in g.goal_candidates:
        report.add("ChainBroken", f"chain ends at {chain[-1]}, not a goal candidate")
    if len(set(chain)) != len(chain):
        report.add("ChainBroken", "chain repeats a condition")
    id_set = {c.id for c in g.conditions}
    if not set(chain) <= id_set:
        report.add("ChainBroken", f"chain references unknown conditions {sorted(set(chain) - id_set)}")
        return
    for a, b in zip(chain, chain[1:]):
        if (a, b) not in edges:
            report.add("ChainBroken", f"no exploit connects chain step {a} -> {b}")
    # Exploit count along the chain can never exceed the condition count.
    if len(chain) - 1 > len(g.conditions):
        report.add("ChainBroken", "chain uses more exploits than there are conditions")


def chain_progress(g: AttackGraph, injected: set[int]) -> float:
    """Fraction of the attack chain completed by the injected set.

    Counts the longest chain prefix whose non-root conditions are all in
    ``injected`` and divides by the chain length, so the result stays in
    [0, 1) even once the final (goal) condition is injected.
    """
    if not injected <= {c.id for c in g.conditions}:
        raise ValueError(f"injected ids {sorted(injected)} contain unknown conditions")
    done = 0
    for cid in g.chain[1:]:
        if cid in injected:
            done += 1
        else:
            break
    return done / len(g.chain)


# --- serialization ---------------------------------------------------------


def graph_to_payload(g: AttackGraph, metadata: dict | None = None) -> dict:
    return {
        "version": SCENARIO_FORMAT_VERSION,
        "metadata": metadata or {},
        "conditions": [
            {"id": c.id, "name": c.name, "critical": c.availability_critical}
            for c in g.conditions
        ],
        "exploits": [
            {
                "id": e.id,
                "pre": sorted(e.preconditions),
                "effect": e.effect,
                "prob": e.success_prob,
            }
            for e in g.exploits
        ],
        "root": g.root,
        "goals": sorted(g.goal_candidates),
        "chain": list(g.chain),
    }


def graph_from_payload(payload: dict) -> AttackGraph:
    try:
        if payload["version"] != SCENARIO_FORMAT_VERSION:
            raise ParseError(f"unsupported scenario version {payload['version']!r}")
        conditions = tuple(
            EventCondition(int(c["id"]), str(c["name"]), bool(c.get("critical", False)))
            for c in payload["conditions"]
        )
        exploits = tuple(
            Exploit(
                int(e["id"]),
                frozenset(int(p) for p in e["pre"]),
                int(e["effect"]),
                float(e.get("prob", 1.0)),
            )
            for e in payload["exploits"]
        )
        graph = AttackGraph(
            conditions=conditions,
            exploits=exploits,
            root=int(payload["root"]),
            goal_candidates=frozenset(int(x) for x in payload["goals"]),
            chain=tuple(int(x) for x in payload["chain"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"scenario payload malformed: {exc}") from exc
    return graph


def serialize_scenario(g: AttackGraph, metadata: dict | None = None) -> str:
    """Canonical text form: stable key order so equal graphs give equal bytes."""
    return json.dumps(graph_to_payload(g, metadata), sort_keys=True, indent=2) + "\n"


def save_scenario(g: AttackGraph, path: str | Path, metadata: dict | None = None) -> None:
    Path(path).write_text(serialize_scenario(g, metadata), encoding="utf-8")


def load_scenario(path: str | Path) -> AttackGraph:
    """Load and fully validate a scenario file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ParseError(f"scenario file {path} must contain an object at top level")
    graph = graph_from_payload(payload)
    report = validate_graph(graph)
    if not report.ok:
        raise ValidationError(report)
    return graph


# --- synthetic generation --------------------------------------------------


@dataclass(frozen=True)
class GeneratorParams:
    n_conditions: int
    chain_length: int
    branching: int = 1
    success_prob_range: tuple[float, float] = (1.0, 1.0)
    critical_prob: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_conditions < 2:
            raise InvalidParams(f"need at least 2 conditions, got {self.n_conditions}")
        if not 2 <= self.chain_length <= self.n_conditions:
            raise InvalidParams(
                f"chain_length must be in [2, {self.n_conditions}], got {self.chain_length}"
            )
        if self.branching < 1:
            raise InvalidParams(f"branching must be >= 1, got {self.branching}")
        lo, hi = self.success_prob_range
        if not 0.0 < lo <= hi <= 1.0:
            raise InvalidParams(f"success_prob_range must satisfy 0 < lo <= hi <= 1, got {lo, hi}")
        if not 0.0 <= self.critical_prob <= 1.0:
            raise InvalidParams(f"critical_prob must be in [0, 1], got {self.critical_prob}")


def generate_synthetic(params: GeneratorParams) -> AttackGraph:
    """Deterministically generate a valid random scenario from the parameters.

    The designated chain is laid down first; remaining conditions hang off
    earlier ones (up to ``branching`` preconditions each), which keeps the
    graph acyclic and every condition reachable from the root.
    """
    params.validate()
    rng = random.Random(params.seed)
    n = params.n_conditions
    lo, hi = params.success_prob_range

    others = list(range(1, n))
    rng.shuffle(others)
    chain = [0] + others[: params.chain_length - 1]
    rest = others[params.chain_length - 1 :]
    topo = chain + rest  # construction order; edges only point forward in it
    chain_end = chain[-1]

    def prob() -> float:
        return lo if lo == hi else rng.uniform(lo, hi)

    exploits: list[Exploit] = []
    for a, b in zip(chain, chain[1:]):
        exploits.append(Exploit(len(exploits), frozenset({a}), b, prob()))

    for pos, cid in enumerate(rest, start=params.chain_length):
        candidates = [c for c in topo[:pos] if c != chain_end]
        k = min(rng.randint(1, params.branching), len(candidates))
        pre = frozenset(rng.sample(candidates, k))
        exploits.append(Exploit(len(exploits), pre, cid, prob()))

    # Extra shortcut edges create alternate routes once branching allows it.
    for _ in range(max(0, params.branching - 1)):
        tail_pos = rng.randrange(1, len(topo))
        tail = topo[tail_pos]
        candidates = [c for c in topo[:tail_pos] if c != chain_end]
        if not candidates:
            continue
        head = rng.choice(candidates)
        edge_exists = any(e.effect == tail and head in e.preconditions for e in exploits)
        if not edge_exists:
            exploits.append(Exploit(len(exploits), frozenset({head}), tail, prob()))

    conditions = tuple(
        EventCondition(i, f"event_{i}", rng.random() < params.critical_prob) for i in range(n)
    )
    used_as_pre = {p for e in exploits for p in e.preconditions}
    leaves = {i for i in range(n) if i not in used_as_pre}
    graph = AttackGraph(
        conditions=conditions,
        exploits=tuple(exploits),
        root=0,
        goal_candidates=frozenset(leaves & _reachable_from_root(n, exploits)),
        chain=tuple(chain),
    )
    report = validate_graph(graph)
    if not report.ok:
        raise ValidationError(report)
    return graph


def _reachable_from_root(n: int, exploits: list[Exploit]) -> set[int]:
    succ: dict[int, set[int]] = {i: set() for i in range(n)}
    for e in exploits:
        for p in e.preconditions:
            succ[p].add(e.effect)
    seen = {0}
    frontier = [0]
    while frontier:
        node = frontier.pop()
        for nxt in succ[node]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen
