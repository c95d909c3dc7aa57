"""Finite state machine driving the attack-defense duel on an attack graph.

Both agents act every step with 2-action spaces; the environment resolves
which concrete condition an inject or block lands on (so Q-networks keep
2-dimensional outputs).  The attack action resolves first, then the defense
action passes a policy compliance check before touching the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .rewards import RewardConstants, RewardContext, attack_reward, defense_reward
from .scenario import AttackGraph, chain_progress


class InvalidGoal(ValueError):
    """Requested episode goal is not a goal candidate."""


class EpisodeFinished(RuntimeError):
    """step() called after the episode reached a terminal state."""


class Status(IntEnum):
    NOT_INJECTED = 0
    INJECTED = 1
    BLOCKED = 2


class AttackAction(IntEnum):
    RECON = 0
    INJECT = 1


class DefenseAction(IntEnum):
    ASSESS = 0
    BLOCK = 1


class Terminal(Enum):
    ONGOING = "ongoing"
    GOAL_COMPROMISED = "goal_compromised"
    GOAL_PROTECTED = "goal_protected"
    STEP_LIMIT = "step_limit"


class Side(Enum):
    ATTACK = "attack"
    DEFENSE = "defense"


class ComplianceMode(Enum):
    ALLOW_ALL = "allow_all"
    PROTECT_CRITICAL = "protect_critical"


class Verdict(Enum):
    ALLOW = "allow"
    DENY = "deny"


NEUTRAL_OPPONENT = (0.5, 0.5)


@dataclass(frozen=True)
class CompliancePolicy:
    """Hub-side veto on defense actions.

    PROTECT_CRITICAL denies blocks on availability-critical conditions; a
    denied block degrades to assess semantics but is still charged as a block.
    """

    mode: ComplianceMode = ComplianceMode.ALLOW_ALL
    denied: frozenset[int] = frozenset()

    @classmethod
    def from_graph(cls, mode: ComplianceMode, g: AttackGraph) -> "CompliancePolicy":
        denied = frozenset(c.id for c in g.conditions if c.availability_critical)
        return cls(mode=mode, denied=denied if mode is ComplianceMode.PROTECT_CRITICAL else frozenset())


def compliance_check(action: DefenseAction, target: int | None, policy: CompliancePolicy) -> Verdict:
    """Pure verdict: deny only PROTECT_CRITICAL blocks aimed at critical conditions."""
    if policy.mode is ComplianceMode.ALLOW_ALL:
        return Verdict.ALLOW
    if action is DefenseAction.BLOCK and target is not None and target in policy.denied:
        return Verdict.DENY
    return Verdict.ALLOW


@dataclass
class EnvState:
    """Mutable per-episode state; exclusively owned by one episode runner.

    ``inject_count``/``block_count`` count inject/block *actions* taken
    (no-op and denied ones included) so reward logarithms are always defined.
    """

    status: list[Status]
    goal: int
    step: int = 0
    recon_streak: int = 0
    assess_streak: int = 0
    inject_count: int = 0
    block_count: int = 0
    last_attack: AttackAction | None = None
    last_defense: DefenseAction | None = None
    terminal: Terminal = Terminal.ONGOING
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def injected_ids(self) -> set[int]:
        return {i for i, s in enumerate(self.status) if s is Status.INJECTED}

    def copy(self) -> "EnvState":
        clone = EnvState(
            status=list(self.status),
            goal=self.goal,
            step=self.step,
            recon_streak=self.recon_streak,
            assess_streak=self.assess_streak,
            inject_count=self.inject_count,
            block_count=self.block_count,
            last_attack=self.last_attack,
            last_defense=self.last_defense,
            terminal=self.terminal,
            rng=np.random.default_rng(),
        )
        clone.rng.bit_generator.state = self.rng.bit_generator.state
        return clone


@dataclass(frozen=True)
class StepInfo:
    attack_target: int | None
    attack_success: bool
    block_target: int | None
    verdict: Verdict | None
    proximity: float
    tolerance: float
    goal_hit: bool


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    attack_reward: float
    defense_reward: float
    terminal: Terminal
    info: StepInfo


def _eligible_targets(state: EnvState, g: AttackGraph) -> list[int]:
    """Conditions the attacker could inject right now: not injected, not
    blocked, and some producing exploit has every precondition injected."""
    out = []
    for c in g.conditions:
        cid = c.id
        if state.status[cid] is not Status.NOT_INJECTED:
            continue
        for e in g.producers[cid]:
            if all(state.status[p] is Status.INJECTED for p in e.preconditions):
                out.append(cid)
                break
    return out


def _goal_reachable_from(state: EnvState, g: AttackGraph, start: int) -> bool:
    """Structural reachability of the goal from ``start`` avoiding blocked nodes."""
    if state.status[start] is Status.BLOCKED:
        return False
    if start == state.goal:
        return True
    seen = {start}
    frontier = [start]
    while frontier:
        node = frontier.pop()
        for nxt in g.successors[node]:
            if nxt in seen or state.status[nxt] is Status.BLOCKED:
                continue
            if nxt == state.goal:
                return True
            seen.add(nxt)
            frontier.append(nxt)
    return False


def resolve_attack_target(state: EnvState, g: AttackGraph) -> int | None:
    """Pick the condition an inject action would land on.

    Chain conditions come first (earliest chain position).  If the chain is
    obstructed, fall back to the deepest currently-injectable condition from
    which the goal is still reachable through unblocked conditions; ties go
    to the lowest id.  Returns None when nothing useful is injectable.
    """
    eligible = _eligible_targets(state, g)
    on_chain = [c for c in eligible if c in g.chain_index]
    if on_chain:
        return min(on_chain, key=lambda c: g.chain_index[c])
    useful = [c for c in eligible if _goal_reachable_from(state, g, c)]
    if not useful:
        return None
    return max(useful, key=lambda c: (g.depth[c], -c))


def resolve_block_target(state: EnvState, g: AttackGraph) -> int | None:
    """Pick the condition a block action would land on: the deepest element
    of the attacker's current frontier (ties to the lowest id)."""
    eligible = _eligible_targets(state, g)
    if not eligible:
        return None
    return max(eligible, key=lambda c: (g.depth[c], -c))


def goal_protected(state: EnvState, g: AttackGraph) -> bool:
    """True when every root-to-goal path passes through a blocked condition,
    i.e. the goal is unreachable from the root in the unblocked subgraph."""
    if state.status[state.goal] is Status.INJECTED:
        return False
    return not _goal_reachable_from(state, g, g.root)


class TriggerActionEnv:
    """Episode engine bound to one attack graph, horizon, and hub policy."""

    def __init__(
        self,
        graph: AttackGraph,
        horizon: int = 50,
        policy: CompliancePolicy | None = None,
        constants: RewardConstants | None = None,
    ):
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        self.graph = graph
        self.horizon = horizon
        self.policy = policy or CompliancePolicy()
        self.constants = constants or RewardConstants()
        self.constants.validate()

    @property
    def obs_dim(self) -> int:
        # 3 status slots per condition + step + proximity + tolerance
        # + own last action one-hot (2) + inferred opponent probabilities (2).
        return 3 * self.graph.n_conditions + 7

    def reset(self, seed: int, goal: int | None = None) -> tuple[EnvState, np.ndarray, np.ndarray]:
        """Fresh episode: root injected, everything else clean, counters zero."""
        if goal is None:
            goal = self.graph.chain[-1]
        if goal not in self.graph.goal_candidates:
            raise InvalidGoal(f"goal {goal} is not in goal_candidates")
        status = [Status.NOT_INJECTED] * self.graph.n_conditions
        status[self.graph.root] = Status.INJECTED
        state = EnvState(status=status, goal=goal, rng=np.random.default_rng(seed))
        obs_a = self.observe(state, Side.ATTACK, NEUTRAL_OPPONENT)
        obs_d = self.observe(state, Side.DEFENSE, NEUTRAL_OPPONENT)
        return state, obs_a, obs_d

    def observe(
        self,
        state: EnvState,
        viewer: Side,
        inferred_opponent: tuple[float, float] = NEUTRAL_OPPONENT,
    ) -> np.ndarray:
        """Fixed-length observation, every entry in [0, 1].

        Layout: per-condition status one-hots (3n), normalized step,
        proximity, tolerance, own last action one-hot (2), inferred opponent
        action probabilities (2).
        """
        p0, p1 = inferred_opponent
        if not (0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0):
            raise ValueError(f"inferred opponent probabilities must lie in [0, 1], got {inferred_opponent}")
        n = self.graph.n_conditions
        vec = np.zeros(self.obs_dim, dtype=np.float64)
        for cid in range(n):
            vec[3 * cid + int(state.status[cid])] = 1.0
        prox = chain_progress(self.graph, state.injected_ids())
        vec[3 * n] = state.step / self.horizon
        vec[3 * n + 1] = prox
        vec[3 * n + 2] = 1.0 - prox
        last = state.last_attack if viewer is Side.ATTACK else state.last_defense
        if last is not None:
            vec[3 * n + 3 + int(last)] = 1.0
        vec[3 * n + 5] = p0
        vec[3 * n + 6] = p1
        return vec

    def step(self, state: EnvState, u: AttackAction, v: DefenseAction) -> StepOutcome:
        """Resolve one joint step: attack first, then the compliance-checked
        defense; rewards use the post-action counters and proximity."""
        if state.terminal is not Terminal.ONGOING:
            raise EpisodeFinished(f"episode already ended with {state.terminal.value}")
        g = self.graph
        state.step += 1

        # Attack phase.
        attack_target: int | None = None
        attack_success = False
        goal_hit = False
        if u is AttackAction.RECON:
            state.recon_streak += 1
        else:
            state.recon_streak = 0
            state.inject_count += 1
            attack_target = resolve_attack_target(state, g)
            if attack_target is not None:
                exploit = next(
                    e
                    for e in g.producers[attack_target]
                    if all(state.status[p] is Status.INJECTED for p in e.preconditions)
                )
                attack_success = (
                    exploit.success_prob >= 1.0
                    or state.rng.random() < exploit.success_prob
                )
                if attack_success:
                    state.status[attack_target] = Status.INJECTED
                    goal_hit = attack_target == state.goal
        prox = chain_progress(g, state.injected_ids())
        tol = 1.0 - prox

        # Defense phase (a block never alters proximity: it only targets
        # not-yet-injected conditions).
        block_target: int | None = None
        verdict: Verdict | None = None
        if v is DefenseAction.ASSESS:
            state.assess_streak += 1
        else:
            state.assess_streak = 0
            state.block_count += 1
            block_target = resolve_block_target(state, g)
            verdict = compliance_check(v, block_target, self.policy)
            if block_target is not None and verdict is Verdict.ALLOW:
                state.status[block_target] = Status.BLOCKED

        ctx = RewardContext(
            proximity=prox,
            recon_streak=state.recon_streak,
            assess_streak=state.assess_streak,
            inject_count=state.inject_count,
            block_count=state.block_count,
            goal_hit=goal_hit,
        )
        r_u = attack_reward(ctx, u is AttackAction.RECON, self.constants)
        r_v = defense_reward(ctx, v is DefenseAction.ASSESS, self.constants)

        state.last_attack = u
        state.last_defense = v
        if state.status[state.goal] is Status.INJECTED:
            state.terminal = Terminal.GOAL_COMPROMISED
        elif goal_protected(state, g):
            state.terminal = Terminal.GOAL_PROTECTED
        elif state.step >= self.horizon:
            state.terminal = Terminal.STEP_LIMIT

        info = StepInfo(
            attack_target=attack_target,
            attack_success=attack_success,
            block_target=block_target,
            verdict=verdict,
            proximity=prox,
            tolerance=tol,
            goal_hit=goal_hit,
        )
        return StepOutcome(
            next_state=state,
            attack_reward=r_u,
            defense_reward=r_v,
            terminal=state.terminal,
            info=info,
        )
