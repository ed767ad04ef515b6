"""Deep deterministic policy gradient learner: replay memory, exploration, updates."""
from __future__ import annotations

from dataclasses import dataclass, asdict, fields

import numpy as np

from .airspace import MAX_ACCEL, OBS_DIM
from .nn import (Adam, Mlp, TANH_SCALED, LINEAR, apply_gradients, backward, forward,
                 init_random, soft_update)

ACTION_DIM = 2


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class DdpgHyperparams:
    discount: float = 0.9
    tau: float = 0.01
    lr_critic: float = 5e-4
    lr_actor: float = 5e-5
    batch_size: int = 64
    buffer_capacity: int = 1_000_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.2
    learn_start: int = 1000
    hidden: tuple = (64, 64)
    optimizer: str = "adam"
    explore_hold: int = 1

    def __post_init__(self):
        checks = {
            "discount": 0.0 <= self.discount < 1.0,
            "tau": 0.0 < self.tau <= 1.0,
            "lr_critic": self.lr_critic >= 0.0,
            "lr_actor": self.lr_actor >= 0.0,
            "batch_size": self.batch_size >= 1,
            "buffer_capacity": self.buffer_capacity >= 1,
            "epsilon_start": 0.0 <= self.epsilon_start <= 1.0,
            "epsilon_end": 0.0 <= self.epsilon_end <= 1.0,
            "epsilon_decay_fraction": 0.0 <= self.epsilon_decay_fraction <= 1.0,
            "learn_start": self.learn_start >= 0,
            "hidden": len(self.hidden) >= 1 and min(self.hidden) >= 1,
            "optimizer": self.optimizer in ("sgd", "adam"),
            "explore_hold": self.explore_hold >= 1,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"{name}={getattr(self, name)!r} out of range")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


def epsilon_at(episode: int, total_episodes: int, hyper: DdpgHyperparams) -> float:
    """Linear decay from start to end over the first fraction of episodes, then flat."""
    span = hyper.epsilon_decay_fraction * total_episodes
    if span <= 0 or episode >= span:
        return hyper.epsilon_end
    frac = episode / span
    return hyper.epsilon_start + frac * (hyper.epsilon_end - hyper.epsilon_start)


class ReplayBuffer:
    """Bounded FIFO of transitions backed by growable ring arrays."""

    def __init__(self, capacity: int, state_dim: int = OBS_DIM, action_dim: int = ACTION_DIM):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim, self.action_dim = state_dim, action_dim
        self.size = 0
        self._next = 0
        self._alloc(min(self.capacity, 4096))

    def _alloc(self, n: int):
        old = getattr(self, "_s", None)
        s = np.zeros((n, self.state_dim))
        a = np.zeros((n, self.action_dim))
        r = np.zeros(n)
        s2 = np.zeros((n, self.state_dim))
        d = np.zeros(n)
        if old is not None:
            k = self.size
            s[:k], a[:k], r[:k], s2[:k], d[:k] = (self._s[:k], self._a[:k], self._r[:k],
                                                  self._s2[:k], self._d[:k])
        self._s, self._a, self._r, self._s2, self._d = s, a, r, s2, d

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        self.add(t.state, t.action, t.reward, t.next_state, t.terminal)

    def add(self, state, action, reward, next_state, terminal) -> None:
        n = len(self._r)
        if self._next == n and n < self.capacity:
            self._alloc(min(self.capacity, 2 * n))
        i = self._next
        self._s[i], self._a[i], self._r[i], self._s2[i], self._d[i] = (
            state, action, reward, next_state, float(terminal))
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        # indices from oldest to newest
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self._next) % self.capacity

    def transitions(self) -> list[Transition]:
        return [Transition(self._s[i].copy(), self._a[i].copy(), float(self._r[i]),
                           self._s2[i].copy(), bool(self._d[i])) for i in self._order()]

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < n:
            raise ValueError(f"cannot sample {n} transitions from a buffer of {self.size}")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> "Batch":
        idx = self.sample_indices(n, rng)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return len(self.rewards)

    @classmethod
    def of(cls, transitions) -> "Batch":
        ts = list(transitions)
        return cls(np.array([t.state for t in ts], dtype=np.float64),
                   np.array([t.action for t in ts], dtype=np.float64),
                   np.array([t.reward for t in ts], dtype=np.float64),
                   np.array([t.next_state for t in ts], dtype=np.float64),
                   np.array([float(t.terminal) for t in ts]))


class Agent:
    """Actor, critic, their target copies, and the replay buffer."""

    def __init__(self, hyper: DdpgHyperparams, rng: np.random.Generator | None = None,
                 state_dim: int = OBS_DIM, action_dim: int = ACTION_DIM,
                 actor: Mlp | None = None, critic: Mlp | None = None):
        self.hyper = hyper
        self.state_dim, self.action_dim = state_dim, action_dim
        if actor is None or critic is None:
            if rng is None:
                raise ValueError("rng required to initialise fresh networks")
            hidden = list(hyper.hidden)
            actor = init_random([state_dim, *hidden, action_dim], rng, TANH_SCALED)
            critic = init_random([state_dim + action_dim, *hidden, 1], rng, LINEAR)
        self.actor, self.critic = actor, critic
        self.actor_target, self.critic_target = actor.copy(), critic.copy()
        self.buffer = ReplayBuffer(hyper.buffer_capacity, state_dim, action_dim)
        self._reset_optimizers()
        self.learn_steps = 0

    def _reset_optimizers(self):
        if self.hyper.optimizer == "adam":
            self._critic_opt = Adam(self.critic, self.hyper.lr_critic)
            self._actor_opt = Adam(self.actor, self.hyper.lr_actor)
        else:
            self._critic_opt = self._actor_opt = None

    def _step(self, net, grads, opt, lr):
        if opt is None:
            apply_gradients(net, grads, lr)
        else:
            opt.step(net, grads)

    def act(self, state) -> np.ndarray:
        return forward(self.actor, state)[0]


def select_action(agent: Agent, state, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy: uniform random acceleration with probability epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return rng.uniform(-MAX_ACCEL, MAX_ACCEL, size=agent.action_dim)
    return agent.act(state)


def bellman_targets(agent: Agent, batch: Batch) -> np.ndarray:
    """y = r + discount * Q'(s', mu'(s')), with the bootstrap masked on terminal steps."""
    a2 = forward(agent.actor_target, batch.next_states)[0]
    q2 = forward(agent.critic_target, np.hstack([batch.next_states, a2]))[0][:, 0]
    return batch.rewards + agent.hyper.discount * (1.0 - batch.terminals) * q2


def critic_update(agent: Agent, batch: Batch, targets: np.ndarray) -> float:
    """One descent step on the mean squared Bellman error; returns the pre-step loss."""
    q, cache = forward(agent.critic, np.hstack([batch.states, batch.actions]))
    err = targets - q[:, 0]
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite critic loss")
    grads = backward(agent.critic, cache, (-2.0 / len(err)) * err[:, None], need_input=False)
    agent._step(agent.critic, grads, agent._critic_opt, agent.hyper.lr_critic)
    return loss


def critic_action_gradient(agent: Agent, states: np.ndarray, actions: np.ndarray):
    """Q(s, a) from the critic and its gradient with respect to the action."""
    q, cache = forward(agent.critic, np.hstack([states, actions]))
    ones = np.ones((len(states), 1))
    dq = backward(agent.critic, cache, ones).input_gradient
    return q[:, 0], dq[:, agent.state_dim:]


def actor_update(agent: Agent, batch: Batch, critic=None) -> float:
    """Deterministic policy gradient ascent on mean Q(s, mu(s)); returns the pre-step mean.

    ``critic(states, actions) -> (q, dq/da)`` replaces the learned critic
    when given.
    """
    a, a_cache = forward(agent.actor, batch.states)
    if critic is None:
        q, dq_da = critic_action_gradient(agent, batch.states, a)
    else:
        q, dq_da = critic(batch.states, a)
    grads = backward(agent.actor, a_cache, -dq_da / len(batch), need_input=False)
    agent._step(agent.actor, grads, agent._actor_opt, agent.hyper.lr_actor)
    return float(np.mean(q))


def agent_learn_step(agent: Agent, rng: np.random.Generator) -> dict:
    """Sample a batch, update critic then actor, then move both targets by tau."""
    h = agent.hyper
    if len(agent.buffer) < max(h.learn_start, h.batch_size):
        return {"learned": False, "critic_loss": float("nan"), "actor_objective": float("nan")}
    batch = agent.buffer.sample(h.batch_size, rng)
    y = bellman_targets(agent, batch)
    loss = critic_update(agent, batch, y)
    objective = actor_update(agent, batch)
    soft_update(agent.critic_target, agent.critic, h.tau)
    soft_update(agent.actor_target, agent.actor, h.tau)
    agent.learn_steps += 1
    return {"learned": True, "critic_loss": loss, "actor_objective": objective}
