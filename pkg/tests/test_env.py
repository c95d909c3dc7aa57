import math

import networkx as nx
import numpy as np
import pytest

from iotduel.env import (
    AttackAction,
    ComplianceMode,
    CompliancePolicy,
    DefenseAction,
    EnvState,
    EpisodeFinished,
    InvalidGoal,
    Side,
    Status,
    Terminal,
    TriggerActionEnv,
    Verdict,
    compliance_check,
    goal_protected,
    resolve_attack_target,
    resolve_block_target,
)
from iotduel.rewards import RewardConstants
from iotduel.scenario import chain_progress

from conftest import and_graph, chain_graph, diamond_graph, diamond6_graph, make_graph, small_fixture_graphs

K = RewardConstants(r_recon=1.0, r_inject=2.0, r_goal=10.0, r_assess=1.0, r_block=2.0)


def fresh(graph, horizon=50, policy=None, constants=K, seed=0, goal=None):
    env = TriggerActionEnv(graph, horizon=horizon, policy=policy, constants=constants)
    state, obs_a, obs_d = env.reset(seed, goal)
    return env, state, obs_a, obs_d


# --- reset -------------------------------------------------------------


def test_reset_contract(chain8):
    env, state, obs_a, obs_d = fresh(chain8)
    assert state.status[0] is Status.INJECTED
    assert all(s is Status.NOT_INJECTED for s in state.status[1:])
    assert (state.step, state.inject_count, state.block_count) == (0, 0, 0)
    assert (state.recon_streak, state.assess_streak) == (0, 0)
    assert state.terminal is Terminal.ONGOING


def test_reset_same_seed_identical(chain8):
    env = TriggerActionEnv(chain8)
    s1, a1, d1 = env.reset(123)
    s2, a2, d2 = env.reset(123)
    assert s1.rng.bit_generator.state == s2.rng.bit_generator.state
    assert np.array_equal(a1, a2) and np.array_equal(d1, d2)


def test_reset_invalid_goal(chain8):
    env = TriggerActionEnv(chain8)
    with pytest.raises(InvalidGoal):
        env.reset(0, goal=3)  # mid-chain condition, not a goal candidate


# --- single steps ------------------------------------------------------


def test_recon_assess_changes_nothing(chain8):
    env, state, _, _ = fresh(chain8)
    out = env.step(state, AttackAction.RECON, DefenseAction.ASSESS)
    assert state.status == [Status.INJECTED] + [Status.NOT_INJECTED] * 7
    assert (state.recon_streak, state.assess_streak) == (1, 1)
    assert out.attack_reward == K.r_recon  # streak 1, log term zero
    assert out.defense_reward == K.r_assess  # proximity 0, both extras zero
    assert out.terminal is Terminal.ONGOING


def test_inject_assess_hand_simulation(chain8):
    env, state, _, _ = fresh(chain8)
    out = env.step(state, AttackAction.INJECT, DefenseAction.ASSESS)
    assert state.status[1] is Status.INJECTED
    assert state.inject_count == 1
    assert out.info.proximity == pytest.approx(1 / 8)
    # hand-evaluated closed forms at proximity 1/8
    assert out.attack_reward == pytest.approx(2.0 + math.log(1) - (1 / 8) * 1, abs=1e-12)
    expected_d = 1.0 - 0.01 * math.log((7 / 8) * 1) + (1 / 8) * (7 / 8)
    assert out.defense_reward == pytest.approx(expected_d, abs=1e-12)


def test_block_freezes_proximity(chain8):
    env, state, _, _ = fresh(chain8)
    out1 = env.step(state, AttackAction.INJECT, DefenseAction.BLOCK)
    # attack resolved first: condition 1 injected, then block lands on the
    # new frontier (condition 2), which protects the goal on a pure chain.
    assert state.status[1] is Status.INJECTED
    assert state.status[2] is Status.BLOCKED
    assert out1.info.proximity == pytest.approx(1 / 8)
    assert out1.terminal is Terminal.GOAL_PROTECTED

    # replaying attacks (terminal cleared in between) can never raise proximity
    for _ in range(5):
        state.terminal = Terminal.ONGOING
        out = env.step(state, AttackAction.INJECT, DefenseAction.ASSESS)
        assert out.info.proximity == pytest.approx(1 / 8)
        assert out.info.attack_target is None


def test_step_after_terminal_raises(chain8):
    env, state, _, _ = fresh(chain8, horizon=1)
    env.step(state, AttackAction.RECON, DefenseAction.ASSESS)
    assert state.terminal is Terminal.STEP_LIMIT
    with pytest.raises(EpisodeFinished):
        env.step(state, AttackAction.RECON, DefenseAction.ASSESS)


def test_goal_compromised_ends_episode():
    g = chain_graph(2)
    env, state, _, _ = fresh(g)
    out = env.step(state, AttackAction.INJECT, DefenseAction.ASSESS)
    assert out.terminal is Terminal.GOAL_COMPROMISED
    assert out.info.goal_hit
    assert out.attack_reward == pytest.approx(2.0 + 0.0 - 0.5 * 1 + 10.0)


def test_attack_precedes_defense_on_goal_step():
    g = chain_graph(2)
    env, state, _, _ = fresh(g)
    out = env.step(state, AttackAction.INJECT, DefenseAction.BLOCK)
    assert out.terminal is Terminal.GOAL_COMPROMISED  # block came too late
    assert state.status[1] is Status.INJECTED


def test_stochastic_exploit_success_is_seeded():
    g = chain_graph(3, prob=0.5)

    def run(seed):
        env, state, _, _ = fresh(g, seed=seed)
        results = []
        while state.terminal is Terminal.ONGOING:
            out = env.step(state, AttackAction.INJECT, DefenseAction.ASSESS)
            results.append(out.info.attack_success)
        return results

    assert run(11) == run(11)
    assert state_after_failures_counts_actions(g)


def state_after_failures_counts_actions(g):
    env = TriggerActionEnv(g, constants=K)
    state, _, _ = env.reset(2)
    attempts = 0
    while state.status[1] is not Status.INJECTED:
        out = env.step(state, AttackAction.INJECT, DefenseAction.ASSESS)
        attempts += 1
        if attempts > 200:
            raise AssertionError("exploit never succeeded")
    return state.inject_count == attempts  # failed attempts still counted


# --- target resolution -------------------------------------------------


def test_attack_target_fresh_chain(chain8):
    env, state, _, _ = fresh(chain8)
    assert resolve_attack_target(state, chain8) == 1


def test_attack_target_none_when_chain_cut(chain8):
    env, state, _, _ = fresh(chain8)
    state.status[1] = Status.BLOCKED
    assert resolve_attack_target(state, chain8) is None


def test_attack_target_falls_back_to_open_branch():
    g = diamond_graph()  # chain through 1; branch 2 open
    env, state, _, _ = fresh(g)
    state.status[1] = Status.BLOCKED
    assert resolve_attack_target(state, g) == 2


def brute_force_eligible(state, g):
    out = set()
    for c in g.conditions:
        if state.status[c.id] is not Status.NOT_INJECTED:
            continue
        for e in g.exploits:
            if e.effect == c.id and all(state.status[p] is Status.INJECTED for p in e.preconditions):
                out.add(c.id)
    return out


def test_attack_target_is_always_eligible_diamond6():
    g = diamond6_graph()
    rng = np.random.default_rng(3)
    for _ in range(300):
        env, state, _, _ = fresh(g)
        for cid in range(1, 6):
            r = rng.random()
            if r < 0.3:
                state.status[cid] = Status.INJECTED
            elif r < 0.5:
                state.status[cid] = Status.BLOCKED
        target = resolve_attack_target(state, g)
        eligible = brute_force_eligible(state, g)
        if target is not None:
            assert target in eligible
            on_chain = [c for c in eligible if c in g.chain_index]
            if on_chain:
                assert target == min(on_chain, key=lambda c: g.chain_index[c])
        else:
            # nothing eligible, or every eligible condition is cut off
            for c in eligible:
                assert not _oracle_reaches_goal(state, g, c)


def _oracle_reaches_goal(state, g, start):
    dg = nx.DiGraph(sorted(g.edges))
    blocked = {i for i, s in enumerate(state.status) if s is Status.BLOCKED}
    if start in blocked:
        return False
    dg.remove_nodes_from(blocked - {start})
    return start == state.goal or (
        start in dg and state.goal in dg and nx.has_path(dg, start, state.goal)
    )


def test_block_target_fresh_chain(chain8):
    env, state, _, _ = fresh(chain8)
    assert resolve_block_target(state, chain8) == 1


def test_block_target_last_remaining(chain8):
    env, state, _, _ = fresh(chain8)
    for cid in range(1, 7):
        state.status[cid] = Status.INJECTED
    assert resolve_block_target(state, chain8) == 7


def test_block_target_prefers_depth_then_lowest_id():
    g = diamond6_graph()
    env, state, _, _ = fresh(g)
    # both branch heads open at depth 1: tie broken by lowest id
    assert resolve_block_target(state, g) == 1
    # inject 1: frontier is now {2 (depth 1), 3 (depth 2)} -> deeper wins
    state.status[1] = Status.INJECTED
    assert resolve_block_target(state, g) == 3


def test_block_target_none_when_frontier_empty():
    g = chain_graph(3)
    env, state, _, _ = fresh(g)
    state.status[1] = Status.BLOCKED
    assert resolve_block_target(state, g) is None


# --- compliance --------------------------------------------------------


def test_compliance_verdicts():
    allow_all = CompliancePolicy()
    assert compliance_check(DefenseAction.BLOCK, 3, allow_all) is Verdict.ALLOW
    g = chain_graph(4, critical=(2,))
    protect = CompliancePolicy.from_graph(ComplianceMode.PROTECT_CRITICAL, g)
    assert compliance_check(DefenseAction.BLOCK, 1, protect) is Verdict.ALLOW
    assert compliance_check(DefenseAction.BLOCK, 2, protect) is Verdict.DENY


def test_denied_block_leaves_state_but_charges_reward():
    g = chain_graph(4, critical=(1,))
    policy = CompliancePolicy.from_graph(ComplianceMode.PROTECT_CRITICAL, g)
    env, state, _, _ = fresh(g, policy=policy)
    out = env.step(state, AttackAction.RECON, DefenseAction.BLOCK)
    assert out.info.verdict is Verdict.DENY
    assert all(s is not Status.BLOCKED for s in state.status)
    assert state.block_count == 1
    assert out.defense_reward == pytest.approx(2.0 - 1.0 - math.log(1))  # block formula


# --- observations ------------------------------------------------------


def test_observation_fresh_chain(chain8):
    env, state, obs_a, _ = fresh(chain8)
    n = 8
    assert obs_a.shape == (3 * n + 7,)
    one_hots = obs_a[: 3 * n].reshape(n, 3)
    assert one_hots[0].tolist() == [0.0, 1.0, 0.0]  # root injected
    assert np.all(one_hots[1:, 0] == 1.0)
    assert obs_a[3 * n] == 0.0  # step
    assert obs_a[3 * n + 1] == 0.0  # proximity
    assert obs_a[3 * n + 2] == 1.0  # tolerance
    assert obs_a[3 * n + 3 : 3 * n + 5].tolist() == [0.0, 0.0]  # no last action
    assert obs_a[3 * n + 5 :].tolist() == [0.5, 0.5]


def test_observation_exact_three_condition_fixture():
    g = chain_graph(3)
    env = TriggerActionEnv(g, horizon=10, constants=K)
    state, _, _ = env.reset(0)
    env.step(state, AttackAction.INJECT, DefenseAction.ASSESS)
    obs = env.observe(state, Side.ATTACK, (0.25, 0.75))
    # hand-computed: statuses [I, I, N], step 1/10, proximity 1/3,
    # tolerance 2/3, last attack = inject, opponent (0.25, 0.75)
    expected = [
        0.0, 1.0, 0.0,
        0.0, 1.0, 0.0,
        1.0, 0.0, 0.0,
        0.1,
        1 / 3,
        2 / 3,
        0.0, 1.0,
        0.25, 0.75,
    ]
    assert obs.tolist() == pytest.approx(expected, abs=1e-15)


def test_observation_entries_stay_in_unit_interval(chain8):
    env, state, _, _ = fresh(chain8)
    rng = np.random.default_rng(0)
    while state.terminal is Terminal.ONGOING:
        u = AttackAction(int(rng.integers(2)))
        v = DefenseAction(int(rng.integers(2)))
        env.step(state, u, v)
        for side in (Side.ATTACK, Side.DEFENSE):
            obs = env.observe(state, side, (rng.random(), rng.random()))
            assert np.all(obs >= 0.0) and np.all(obs <= 1.0)


def test_observation_rejects_bad_probabilities(chain8):
    env, state, _, _ = fresh(chain8)
    with pytest.raises(ValueError):
        env.observe(state, Side.ATTACK, (1.5, 0.0))


def test_observation_viewer_sees_own_last_action(chain8):
    env, state, _, _ = fresh(chain8)
    env.step(state, AttackAction.RECON, DefenseAction.BLOCK)
    n = 8
    obs_a = env.observe(state, Side.ATTACK)
    obs_d = env.observe(state, Side.DEFENSE)
    assert obs_a[3 * n + 3 : 3 * n + 5].tolist() == [1.0, 0.0]  # recon
    assert obs_d[3 * n + 3 : 3 * n + 5].tolist() == [0.0, 1.0]  # block


# --- invariants over random rollouts ------------------------------------


def random_rollout(env, seed, max_steps=None):
    rng = np.random.default_rng(seed)
    state, _, _ = env.reset(int(rng.integers(2**32)))
    history = [list(state.status)]
    while state.terminal is Terminal.ONGOING:
        u = AttackAction(int(rng.integers(2)))
        v = DefenseAction(int(rng.integers(2)))
        env.step(state, u, v)
        history.append(list(state.status))
        if max_steps and len(history) > max_steps:
            break
    return state, history


@pytest.mark.parametrize("graph_idx", range(len(small_fixture_graphs())))
def test_blocked_absorbing_and_injected_monotone(graph_idx):
    g = small_fixture_graphs()[graph_idx]
    env = TriggerActionEnv(g, constants=K)
    for seed in range(40):
        _, history = random_rollout(env, seed)
        for earlier, later in zip(history, history[1:]):
            for a, b in zip(earlier, later):
                if a is Status.BLOCKED:
                    assert b is Status.BLOCKED
                if a is Status.INJECTED:
                    assert b is Status.INJECTED


def oracle_classification(state, g):
    """Path-enumeration ground truth for the terminal kind."""
    if state.status[state.goal] is Status.INJECTED:
        return Terminal.GOAL_COMPROMISED
    dg = nx.DiGraph(sorted(g.edges))
    dg.add_nodes_from(c.id for c in g.conditions)
    all_paths = list(nx.all_simple_paths(dg, g.root, state.goal)) if g.root != state.goal else [[g.root]]
    for path in all_paths:
        if all(state.status[c] is not Status.BLOCKED for c in path):
            return None  # at least one clean path: not protected
    return Terminal.GOAL_PROTECTED


def test_terminal_classification_matches_path_enumeration():
    for g in small_fixture_graphs():
        env = TriggerActionEnv(g, constants=K)
        for seed in range(40):
            state, _ = random_rollout(env, seed)
            expected = oracle_classification(state, g)
            if state.terminal in (Terminal.GOAL_COMPROMISED, Terminal.GOAL_PROTECTED):
                assert state.terminal is expected
            else:
                assert expected is None  # step limit: goal neither taken nor cut


def test_proximity_never_rises_after_protection():
    for g in small_fixture_graphs():
        env = TriggerActionEnv(g, constants=K)
        for seed in range(40):
            state, _ = random_rollout(env, seed)
            if state.terminal is not Terminal.GOAL_PROTECTED:
                continue
            frozen = chain_progress(g, state.injected_ids())
            replay = state.copy()
            rng = np.random.default_rng(seed + 1)
            for _ in range(10):
                replay.terminal = Terminal.ONGOING
                env.step(replay, AttackAction.INJECT, DefenseAction(int(rng.integers(2))))
                assert chain_progress(g, replay.injected_ids()) <= frozen + 1e-15


def test_goal_protected_requires_full_cut():
    g = diamond_graph()
    env, state, _, _ = fresh(g)
    state.status[1] = Status.BLOCKED
    assert not goal_protected(state, g)  # branch through 2 still open
    state.status[2] = Status.BLOCKED
    assert goal_protected(state, g)


def test_and_precondition_gating():
    g = and_graph()
    env, state, _, _ = fresh(g)
    # chain order [0, 1, 3, 4] but 3 needs both 1 and 2 injected
    assert resolve_attack_target(state, g) == 1
    state.status[1] = Status.INJECTED
    assert resolve_attack_target(state, g) == 2  # 3 not eligible yet (needs 2)
    state.status[2] = Status.INJECTED
    assert resolve_attack_target(state, g) == 3
