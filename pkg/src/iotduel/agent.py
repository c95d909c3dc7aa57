"""Recurrent Q-learner used by both seats of the duel.

One agent owns an online network, a periodically synced target network, an
epsilon-greedy exploration schedule, and a small recurrent classifier that
predicts the opponent's current action from its action history plus the
current observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (
    AdamState,
    adam_step,
    build_opponent_network,
    build_q_network,
    clip_global_norm,
    clone_network,
    mse_loss,
    softmax,
    softmax_cross_entropy,
)


class InsufficientData(RuntimeError):
    """Replay buffer holds nothing to sample."""


@dataclass
class EpsilonSchedule:
    """Multiplicative epsilon decay clamped at a floor."""

    epsilon: float = 1.0
    decay: float = 0.9995
    floor: float = 0.005


def decay_epsilon(schedule: EpsilonSchedule) -> EpsilonSchedule:
    """Apply one decay step (called once per gradient update)."""
    schedule.epsilon = max(schedule.floor, schedule.epsilon * schedule.decay)
    return schedule


def epsilon_greedy(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """With probability epsilon pick uniformly (argmax included), else greedy."""
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


@dataclass(frozen=True)
class Experience:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    done: bool
    episode_id: int
    step_index: int


class ReplayBuffer:
    """Fixed-capacity ring of transitions with oldest-first eviction.

    Episode ids are stored per transition so sampled sequences never cross an
    episode boundary, even after the head of an old episode was evicted.
    """

    def __init__(self, capacity: int = 5000):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._data: list[Experience | None] = [None] * capacity
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def __getitem__(self, i: int) -> Experience:
        if not 0 <= i < self._size:
            raise IndexError(i)
        return self._data[(self._head + i) % self.capacity]  # type: ignore[return-value]

    def append(self, exp: Experience) -> None:
        if self._size < self.capacity:
            self._data[(self._head + self._size) % self.capacity] = exp
            self._size += 1
        else:
            self._data[self._head] = exp
            self._head = (self._head + 1) % self.capacity


def store_episode(buffer: ReplayBuffer, trace: list[Experience]) -> ReplayBuffer:
    """Append a full episode; evicts oldest transitions beyond capacity."""
    if not trace:
        raise ValueError("cannot store an empty episode trace")
    for exp in trace:
        buffer.append(exp)
    return buffer


def sample_batch(
    buffer: ReplayBuffer,
    batch_size: int,
    seq_len: int,
    rng: np.random.Generator,
) -> list[list[Experience]]:
    """Sample sequences of up to seq_len same-episode transitions.

    Start points are uniform over all stored transitions; a sequence runs
    forward from its start until the episode ends or seq_len is reached.
    """
    if len(buffer) == 0:
        raise InsufficientData("replay buffer is empty")
    batch = []
    for _ in range(batch_size):
        start = int(rng.integers(len(buffer)))
        seq = [buffer[start]]
        for offset in range(start + 1, min(start + seq_len, len(buffer))):
            nxt = buffer[offset]
            if nxt.episode_id != seq[0].episode_id:
                break
            seq.append(nxt)
        batch.append(seq)
    return batch


class OpponentModel:
    """Recurrent next-action classifier over [previous opponent action one-hot
    + current observation] step inputs; softmax pair output."""

    def __init__(self, obs_dim: int, hidden: int, rng: np.random.Generator, lr: float):
        self.obs_dim = obs_dim
        self.net = build_opponent_network(2 + obs_dim, hidden, rng)
        self.adam = AdamState.for_params([p for _, p in self.net.parameters()])
        self.lr = lr
        self._carries: list | None = None

    def _encode(self, prev_action: int | None, observation: np.ndarray) -> np.ndarray:
        x = np.zeros(2 + self.obs_dim)
        if prev_action is not None:
            x[prev_action] = 1.0
        x[2:] = observation
        return x

    def begin_episode(self) -> None:
        self._carries = None

    def predict_step(self, prev_action: int | None, observation: np.ndarray) -> np.ndarray:
        """Streaming prediction of the opponent's current action probabilities."""
        if self._carries is None:
            self._carries = self.net.init_carries(1)
        x = self._encode(prev_action, observation)
        logits, self._carries = self.net.step(x[None, :], self._carries)
        return softmax(logits)[0]


def infer_opponent(
    model: OpponentModel,
    history: list[tuple[np.ndarray, int]],
    observation: np.ndarray,
) -> np.ndarray:
    """Stateless prediction from an explicit history.

    ``history`` holds (observation, opponent action) pairs for the previous
    steps; empty history means the start of an episode, where the model runs
    from a zero hidden state with a neutral (all-zero) action token.
    """
    inputs = []
    prev: int | None = None
    for obs_k, act_k in history:
        inputs.append(model._encode(prev, obs_k))
        prev = act_k
    inputs.append(model._encode(prev, observation))
    logits = model.net.forward_sequence(np.stack(inputs))
    return softmax(logits[-1])


def train_opponent_model(
    model: OpponentModel,
    episode: list[tuple[int | None, np.ndarray, int]],
) -> float:
    """One cross-entropy Adam update over an episode of labeled steps.

    Each step is (previous opponent action or None, observation, actual
    opponent action).  Returns the mean cross-entropy before the update.
    """
    if not episode:
        raise ValueError("need at least one labeled step")
    xs = np.stack([model._encode(prev, obs) for prev, obs, _ in episode])
    labels = np.array([label for _, _, label in episode], dtype=np.int64)
    logits = model.net.forward(xs[:, None, :])[:, 0, :]
    loss, dlogits = softmax_cross_entropy(logits, labels)
    model.net.backward(dlogits[:, None, :])
    params = [p for _, p in model.net.parameters()]
    grads = [g for _, g in model.net.gradients()]
    adam_step(params, grads, model.adam, model.lr)
    return loss


@dataclass(frozen=True)
class AgentHyperparams:
    gamma: float = 0.99
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


class DrqnAgent:
    """One seat's learner: streaming action selection plus sequence training."""

    def __init__(self, obs_dim: int, role: str, hp: AgentHyperparams, seed: int):
        self.obs_dim = obs_dim
        self.role = role
        self.hp = hp
        self.rng = np.random.default_rng(seed)
        self.online = build_q_network(obs_dim, self.rng)
        self.target = clone_network(self.online)
        self.adam = AdamState.for_params([p for _, p in self.online.parameters()])
        self.schedule = EpsilonSchedule(hp.eps_start, hp.eps_decay, hp.eps_min)
        self.opponent = OpponentModel(obs_dim, hp.opponent_hidden, self.rng, hp.lr)
        self.train_steps = 0
        self._carries: list | None = None

    def begin_episode(self) -> None:
        self._carries = None
        self.opponent.begin_episode()

    def q_values(self, observation: np.ndarray) -> np.ndarray:
        """Streaming Q(s, .) with the hidden state threaded over the episode."""
        if self._carries is None:
            self._carries = self.online.init_carries(1)
        q, self._carries = self.online.step(np.asarray(observation)[None, :], self._carries)
        return q[0]

    def act(self, observation: np.ndarray, epsilon: float | None = None) -> int:
        eps = self.schedule.epsilon if epsilon is None else epsilon
        return epsilon_greedy(self.q_values(observation), eps, self.rng)


def select_action(agent: DrqnAgent, observation_sequence: np.ndarray, rng: np.random.Generator) -> int:
    """Epsilon-greedy action from the Q-values at the end of the sequence."""
    seq = np.asarray(observation_sequence, dtype=np.float64)
    q_seq = agent.online.forward_sequence(seq)
    return epsilon_greedy(q_seq[-1], agent.schedule.epsilon, rng)


def sync_target(agent: DrqnAgent) -> DrqnAgent:
    """Copy online parameters into the target network."""
    agent.target.set_parameters([p.copy() for _, p in agent.online.parameters()])
    return agent


def train_step(agent: DrqnAgent, batch: list[list[Experience]]) -> float:
    """One Adam update on the online network from a batch of sequences.

    Targets bootstrap through the target network:
    y = r + gamma * max_a' Q_target(s', a') * (1 - done).  For sequences that
    start mid-episode the first min(burn_in, len - 1) steps only warm up the
    recurrent state and are excluded from the loss; sequences starting at an
    episode's first step need no warm-up (their zero hidden state is exact).
    """
    B = len(batch)
    T = max(len(seq) for seq in batch)
    D = agent.obs_dim
    A = agent.online.output_dim

    obs = np.zeros((T, B, D))
    nxt = np.zeros((T, B, D))
    actions = np.zeros((T, B), dtype=np.int64)
    rewards = np.zeros((T, B))
    dones = np.zeros((T, B))
    loss_mask = np.zeros((T, B))
    for bi, seq in enumerate(batch):
        burn = min(agent.hp.burn_in, len(seq) - 1) if seq[0].step_index > 0 else 0
        for t, exp in enumerate(seq):
            obs[t, bi] = exp.observation
            nxt[t, bi] = exp.next_observation
            actions[t, bi] = exp.action
            rewards[t, bi] = exp.reward
            dones[t, bi] = 1.0 if exp.done else 0.0
            if t >= burn:
                loss_mask[t, bi] = 1.0

    q_next = agent.target.forward(nxt)
    targets_taken = rewards + agent.hp.gamma * q_next.max(axis=2) * (1.0 - dones)

    q_online = agent.online.forward(obs)
    target_full = q_online.copy()
    mask = np.zeros_like(q_online)
    t_idx, b_idx = np.nonzero(loss_mask)
    target_full[t_idx, b_idx, actions[t_idx, b_idx]] = targets_taken[t_idx, b_idx]
    mask[t_idx, b_idx, actions[t_idx, b_idx]] = 1.0

    loss, dq = mse_loss(q_online, target_full, mask)
    agent.online.backward(dq)
    params = [p for _, p in agent.online.parameters()]
    grads = [g for _, g in agent.online.gradients()]
    if agent.hp.grad_clip is not None:
        clip_global_norm(grads, agent.hp.grad_clip)
    adam_step(params, grads, agent.adam, agent.hp.lr)
    agent.train_steps += 1
    return loss
