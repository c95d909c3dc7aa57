"""Training and evaluation loops for the two-seat duel.

Each episode: roll out both agents step by step (attack resolves first),
store experiences and opponent-action labels, then run the per-episode budget
of gradient updates interleaved attack/defense, update the opponent models,
and sync target networks on the configured episode cadence.  Everything is
driven by seed-derived generators, so a run is a pure function of its config.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agent import (
    AgentHyperparams,
    DrqnAgent,
    ReplayBuffer,
    Experience,
    decay_epsilon,
    store_episode,
    sample_batch,
    sync_target,
    train_opponent_model,
    train_step,
)
from .checkpoint import load_agent, save_agent
from .env import (
    AttackAction,
    ComplianceMode,
    CompliancePolicy,
    DefenseAction,
    Side,
    Terminal,
    TriggerActionEnv,
)
from .metrics import CSV_COLUMNS, EpisodeMetrics, MetricsLog, moving_average  # noqa: F401
from .nn import backend
from .rewards import RewardConstants, aggression_trigger
from .scenario import AttackGraph, GeneratorParams, generate_synthetic, load_scenario


SCRIPTED_KINDS = ("always_inject", "always_recon", "random", "no_defense", "always_block")


class ScriptedPolicy:
    """Fixed action source usable in either seat.

    Kinds: always_inject / always_block emit action 1, always_recon /
    no_defense emit action 0, and random:p emits action 1 with probability p
    (default 0.5).
    """

    def __init__(self, kind: str, seed=0):
        base, _, arg = kind.partition(":")
        if base not in SCRIPTED_KINDS:
            raise ValueError(f"unknown scripted policy {kind!r}; have {SCRIPTED_KINDS}")
        self.kind = base
        self.p = float(arg) if arg else 0.5
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"random policy probability must be in [0, 1], got {self.p}")
        self.rng = np.random.default_rng(seed)

    def begin_episode(self) -> None:
        pass

    def act(self, observation) -> int:
        if self.kind in ("always_inject", "always_block"):
            return 1
        if self.kind in ("always_recon", "no_defense"):
            return 0
        return int(self.rng.random() < self.p)


def scripted_opponent(kind: str, seed=0) -> ScriptedPolicy:
    return ScriptedPolicy(kind, seed)


@dataclass
class RunConfig:
    """Everything a run needs; defaults follow the tuned hyperparameter set."""

    scenario: str | None = None
    generator: GeneratorParams | None = None
    episodes: int = 350
    updates_per_episode: int = 50
    horizon: int = 50
    seed: int = 0
    target_sync_every: int = 10
    gamma_attack: float = 0.99
    gamma_defense: float = 0.99
    lr: float = 0.001
    batch_size: int = 32
    eps_start: float = 1.0
    eps_decay: float = 0.9995
    eps_min: float = 0.005
    seq_len: int = 8
    burn_in: int = 2
    buffer_capacity: int = 5000
    opponent_hidden: int = 16
    grad_clip: float | None = None
    rewards: RewardConstants = field(default_factory=RewardConstants)
    compliance_mode: str = "allow_all"
    goal_resample: bool = False
    attack_policy: str = "learned"
    defense_policy: str = "learned"

    def validate(self) -> None:
        for name in ("episodes", "updates_per_episode", "horizon", "target_sync_every",
                     "batch_size", "seq_len", "buffer_capacity", "opponent_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.scenario is None and self.generator is None:
            raise ValueError("config needs either a scenario path or generator params")
        ComplianceMode(self.compliance_mode)
        for seat, policy in (("attack", self.attack_policy), ("defense", self.defense_policy)):
            if policy != "learned":
                ScriptedPolicy(policy)  # raises on unknown kinds
        self.rewards.validate()

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.generator is not None:
            out["generator"] = dataclasses.asdict(self.generator)
            out["generator"]["success_prob_range"] = list(self.generator.success_prob_range)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if data.get("generator") is not None:
            gen = dict(data["generator"])
            if "success_prob_range" in gen:
                gen["success_prob_range"] = tuple(gen["success_prob_range"])
            data["generator"] = GeneratorParams(**gen)
        if data.get("rewards") is not None and not isinstance(data["rewards"], RewardConstants):
            data["rewards"] = RewardConstants(**data["rewards"])
        return cls(**data)


def resolve_graph(config: RunConfig) -> AttackGraph:
    if config.scenario is not None:
        return load_scenario(config.scenario)
    return generate_synthetic(config.generator)


def _hyperparams(config: RunConfig, gamma: float) -> AgentHyperparams:
    return AgentHyperparams(
        gamma=gamma,
        lr=config.lr,
        batch_size=config.batch_size,
        eps_start=config.eps_start,
        eps_decay=config.eps_decay,
        eps_min=config.eps_min,
        seq_len=config.seq_len,
        burn_in=config.burn_in,
        buffer_capacity=config.buffer_capacity,
        opponent_hidden=config.opponent_hidden,
        grad_clip=config.grad_clip,
    )


class Trainer:
    """Deterministic episode runner holding both seats and their buffers."""

    def __init__(
        self,
        config: RunConfig,
        graph: AttackGraph | None = None,
        eval_mode: bool = False,
        attack_agent: DrqnAgent | None = None,
        defense_agent: DrqnAgent | None = None,
    ):
        config.validate()
        self.cfg = config
        self.graph = graph if graph is not None else resolve_graph(config)
        policy = CompliancePolicy.from_graph(ComplianceMode(config.compliance_mode), self.graph)
        self.env = TriggerActionEnv(self.graph, config.horizon, policy, config.rewards)
        self.eval_mode = eval_mode

        seed_seq = np.random.SeedSequence(config.seed)
        env_ss, attack_ss, defense_ss, scripted_a_ss, scripted_d_ss, goal_ss = seed_seq.spawn(6)
        self.episode_seed_rng = np.random.default_rng(env_ss)
        self.goal_rng = np.random.default_rng(goal_ss)

        obs_dim = self.env.obs_dim
        if config.attack_policy == "learned":
            self.attack = attack_agent or DrqnAgent(obs_dim, "attack", _hyperparams(config, config.gamma_attack), attack_ss)
        else:
            self.attack = ScriptedPolicy(config.attack_policy, scripted_a_ss)
        if config.defense_policy == "learned":
            self.defense = defense_agent or DrqnAgent(obs_dim, "defense", _hyperparams(config, config.gamma_defense), defense_ss)
        else:
            self.defense = ScriptedPolicy(config.defense_policy, scripted_d_ss)

        self.attack_buffer = ReplayBuffer(config.buffer_capacity)
        self.defense_buffer = ReplayBuffer(config.buffer_capacity)
        self.episode_index = 0
        self.sync_episodes: list[int] = []
        self.rows: list[EpisodeMetrics] = []

    def _learned(self, actor) -> bool:
        return isinstance(actor, DrqnAgent)

    def _effective_epsilon(self, actor) -> float | None:
        if not self._learned(actor):
            return None
        return 0.0 if self.eval_mode else actor.schedule.epsilon

    def _pick_goal(self) -> int:
        if self.cfg.goal_resample:
            candidates = sorted(self.graph.goal_candidates)
            return int(candidates[self.goal_rng.integers(len(candidates))])
        return self.graph.chain[-1]

    def _observe_pair(self, state, actor, side: Side, prev_opponent: int | None):
        """Neutral-slot observation plus the agent-facing one with the
        opponent model's prediction filled in."""
        neutral = self.env.observe(state, side)
        if self._learned(actor):
            probs = actor.opponent.predict_step(prev_opponent, neutral)
            return neutral, self.env.observe(state, side, (float(probs[0]), float(probs[1])))
        return neutral, neutral

    def _act(self, actor, observation) -> int:
        if self._learned(actor):
            return actor.act(observation, epsilon=0.0 if self.eval_mode else None)
        return actor.act(observation)

    def run_episode(self) -> EpisodeMetrics:
        cfg = self.cfg
        t_start = time.perf_counter()
        self.episode_index += 1
        goal = self._pick_goal()
        episode_seed = int(self.episode_seed_rng.integers(2**63))
        state, _, _ = self.env.reset(episode_seed, goal)
        self.attack.begin_episode()
        self.defense.begin_episode()

        attack_trace: list[Experience] = []
        defense_trace: list[Experience] = []
        attack_labels: list[tuple[int | None, np.ndarray, int]] = []
        defense_labels: list[tuple[int | None, np.ndarray, int]] = []
        prev_u: int | None = None
        prev_v: int | None = None
        pending_a: tuple[np.ndarray, int, float] | None = None
        pending_d: tuple[np.ndarray, int, float] | None = None

        attack_total = 0.0
        defense_total = 0.0
        proximity_series: list[float] = []
        aggression_steps = 0
        protected_at: int | None = None

        while state.terminal is Terminal.ONGOING:
            neutral_a, obs_a = self._observe_pair(state, self.attack, Side.ATTACK, prev_v)
            neutral_d, obs_d = self._observe_pair(state, self.defense, Side.DEFENSE, prev_u)
            if pending_a is not None:
                attack_trace.append(Experience(*pending_a, obs_a, False, self.episode_index, state.step - 1))
                defense_trace.append(Experience(*pending_d, obs_d, False, self.episode_index, state.step - 1))

            u = self._act(self.attack, obs_a)
            v = self._act(self.defense, obs_d)
            outcome = self.env.step(state, AttackAction(u), DefenseAction(v))

            attack_labels.append((prev_v, neutral_a, v))
            defense_labels.append((prev_u, neutral_d, u))
            pending_a = (obs_a, u, outcome.attack_reward)
            pending_d = (obs_d, v, outcome.defense_reward)
            prev_u, prev_v = u, v

            attack_total += outcome.attack_reward
            defense_total += outcome.defense_reward
            proximity_series.append(outcome.info.proximity)
            if aggression_trigger(outcome.info.proximity, outcome.info.tolerance):
                aggression_steps += 1
            if outcome.terminal is Terminal.GOAL_PROTECTED and protected_at is None:
                protected_at = state.step

        final_a = self._observe_pair(state, self.attack, Side.ATTACK, prev_v)[1]
        final_d = self._observe_pair(state, self.defense, Side.DEFENSE, prev_u)[1]
        attack_trace.append(Experience(*pending_a, final_a, True, self.episode_index, state.step - 1))
        defense_trace.append(Experience(*pending_d, final_d, True, self.episode_index, state.step - 1))

        opp_loss_a: float | None = None
        opp_loss_d: float | None = None
        if not self.eval_mode:
            if self._learned(self.attack):
                store_episode(self.attack_buffer, attack_trace)
            if self._learned(self.defense):
                store_episode(self.defense_buffer, defense_trace)
            for _ in range(cfg.updates_per_episode):
                if self._learned(self.attack):
                    batch = sample_batch(self.attack_buffer, cfg.batch_size, cfg.seq_len, self.attack.rng)
                    train_step(self.attack, batch)
                    decay_epsilon(self.attack.schedule)
                if self._learned(self.defense):
                    batch = sample_batch(self.defense_buffer, cfg.batch_size, cfg.seq_len, self.defense.rng)
                    train_step(self.defense, batch)
                    decay_epsilon(self.defense.schedule)
            if self._learned(self.attack):
                opp_loss_a = train_opponent_model(self.attack.opponent, attack_labels)
            if self._learned(self.defense):
                opp_loss_d = train_opponent_model(self.defense.opponent, defense_labels)
            if self.episode_index % cfg.target_sync_every == 0:
                if self._learned(self.attack):
                    sync_target(self.attack)
                if self._learned(self.defense):
                    sync_target(self.defense)
                self.sync_episodes.append(self.episode_index)

        steps = state.step
        row = EpisodeMetrics(
            episode=self.episode_index,
            steps=steps,
            terminal=state.terminal.value,
            attack_reward_total=attack_total,
            defense_reward_total=defense_total,
            injections=state.inject_count,
            blocks=state.block_count,
            recons=steps - state.inject_count,
            assesses=steps - state.block_count,
            proximity_mean=sum(proximity_series) / steps,
            proximity_final=proximity_series[-1],
            tolerance_mean=sum(1.0 - p for p in proximity_series) / steps,
            aggression_steps=aggression_steps,
            epsilon_attack=self._effective_epsilon(self.attack),
            epsilon_defense=self._effective_epsilon(self.defense),
            opp_loss_attack=opp_loss_a,
            opp_loss_defense=opp_loss_d,
            wall_time_s=time.perf_counter() - t_start,
            proximity_series=proximity_series,
            protected_at=protected_at,
        )
        self.rows.append(row)
        return row

    def build_log(self, mode: str = "train") -> MetricsLog:
        header = {
            "mode": mode,
            "version": __version__,
            "backend": backend.active_name(),
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "csv_columns": CSV_COLUMNS,
            "scenario_conditions": self.graph.n_conditions,
            "chain_length": len(self.graph.chain),
        }
        return MetricsLog(header=header, rows=self.rows)


def run_training(
    config: RunConfig,
    out_dir: str | Path | None = None,
    graph: AttackGraph | None = None,
) -> MetricsLog:
    """Run the full training protocol; flushes a partial log if a run aborts."""
    trainer = Trainer(config, graph=graph)
    try:
        for _ in range(config.episodes):
            trainer.run_episode()
    except BaseException:
        if out_dir is not None and trainer.rows:
            trainer.build_log().write(out_dir)
        raise
    log = trainer.build_log()
    if out_dir is not None:
        log.write(out_dir)
        if isinstance(trainer.attack, DrqnAgent):
            save_agent(trainer.attack, Path(out_dir) / "checkpoint_attack.bin")
        if isinstance(trainer.defense, DrqnAgent):
            save_agent(trainer.defense, Path(out_dir) / "checkpoint_defense.bin")
    return log


def run_evaluation(
    config: RunConfig,
    checkpoint_attack: str | Path | None = None,
    checkpoint_defense: str | Path | None = None,
    out_dir: str | Path | None = None,
    graph: AttackGraph | None = None,
) -> MetricsLog:
    """Greedy (epsilon = 0) rollouts with no learning.

    Each seat comes from a checkpoint when given, otherwise from the config's
    seat policy (scripted kinds allowed; "learned" means a fresh untrained
    agent)."""
    graph = graph if graph is not None else resolve_graph(config)
    env_probe = TriggerActionEnv(graph, config.horizon)
    attack_agent = load_agent(checkpoint_attack, env_probe.obs_dim) if checkpoint_attack else None
    defense_agent = load_agent(checkpoint_defense, env_probe.obs_dim) if checkpoint_defense else None
    trainer = Trainer(
        config,
        graph=graph,
        eval_mode=True,
        attack_agent=attack_agent,
        defense_agent=defense_agent,
    )
    for _ in range(config.episodes):
        trainer.run_episode()
    log = trainer.build_log(mode="eval")
    if out_dir is not None:
        log.write(out_dir)
    return log
