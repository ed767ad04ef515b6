"""Episode loop, staged curriculum and rolling outcome metrics."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import seeding
from .airspace import (MAX_ACCEL, EnvInstance, OUTCOMES, SENSING_RADIUS, ScenarioConfig, Status,
                       build_observation, clamp_action, classify, nearest_entity_vector,
                       sample_scenario, step_kinematics)
from .ddpg import Agent, DdpgHyperparams, agent_learn_step, epsilon_at, select_action
from .rewards import RewardConfig, StepContext, total_reward_full, total_reward_simple

log = logging.getLogger(__name__)

TERMINAL = frozenset({Status.SUCCESS, Status.COLLISION, Status.PPZ, Status.EXITED})

METRIC_COLUMNS = ["episode", "outcome", "steps", "cumulative_reward", "rolling_success",
                  "rolling_collision", "rolling_ppz", "rolling_exit", "epsilon"]


@dataclass(frozen=True)
class ObservationConfig:
    """Sensor settings shared by training and evaluation of one policy."""

    sensing_radius: float = SENSING_RADIUS
    scale: float = 4000.0

    def observe(self, env: EnvInstance, u, extra_obstacles=None) -> np.ndarray:
        return build_observation(env, u, sensing_radius=self.sensing_radius, scale=self.scale,
                                 extra_obstacles=extra_obstacles).as_vector()


@dataclass
class StepRecord:
    t: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    d_dest: float
    d_obst: float
    d_ppz: float


@dataclass
class EpisodeOutcome:
    status: Status
    steps: int
    cumulative_reward: float
    epsilon: float = 0.0
    trajectory: list[StepRecord] | None = None


Policy = Callable[[np.ndarray, object, EnvInstance], np.ndarray]


def record_step(env: EnvInstance, u, a, extra_obstacles=None) -> StepRecord:
    t = u.step_count * env.dt
    obs = env.obstacle_centers(t)
    if extra_obstacles is not None and len(extra_obstacles):
        obs = np.concatenate([obs, extra_obstacles]) if len(obs) else extra_obstacles
    return StepRecord(
        t=t, position=u.position.copy(), velocity=u.velocity.copy(), acceleration=np.array(a, float),
        d_dest=float(np.linalg.norm(env.destination - u.position)),
        d_obst=nearest_entity_vector(u.position, obs)[1],
        d_ppz=nearest_entity_vector(u.position, env.ppz_centers())[1])


def step_reward(env: EnvInstance, prev_pos, u, status: Status, cfg: RewardConfig,
                near_obstacle, near_ppz) -> float:
    ctx = StepContext(prev_pos, u.position, env.destination, status, near_obstacle, near_ppz)
    if env.statics or env.dynamics or env.ppzs:
        return total_reward_full(ctx, cfg)
    return total_reward_simple(ctx, cfg)


def run_episode(agent: Agent | None, env: EnvInstance, epsilon: float, rng: np.random.Generator,
                *, learn: bool = False, store: bool | None = None,
                learn_rng: np.random.Generator | None = None,
                reward_cfg: RewardConfig = RewardConfig(),
                obs_cfg: ObservationConfig = ObservationConfig(),
                policy: Policy | None = None, record: bool = False) -> EpisodeOutcome:
    """Fly one episode to a terminal status.

    ``policy`` overrides the agent's actor (scripted controllers in tests).
    Transitions go to the agent's buffer when ``store`` (defaults to
    ``learn``); a learn step follows every environment step when ``learn``.
    """
    store = learn if store is None else store
    if learn and learn_rng is None:
        raise ValueError("learn_rng required when learning")
    u = env.initial_state()
    s = obs_cfg.observe(env, u)
    total = 0.0
    traj = [] if record else None
    hold = 1 if agent is None else agent.hyper.explore_hold
    if hold > 1 and not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    held, held_left = None, 0
    while True:
        if policy is not None:
            a = policy(s, u, env)
        elif held_left > 0:
            a, held_left = held, held_left - 1
        elif hold == 1:
            a = select_action(agent, s, epsilon, rng)
        elif epsilon > 0.0 and rng.random() < epsilon:
            # exploratory action persists for ``explore_hold`` steps
            held = rng.uniform(-MAX_ACCEL, MAX_ACCEL, size=agent.action_dim)
            a, held_left = held, hold - 1
        else:
            a = agent.act(s)
        a = clamp_action(a)
        t = u.step_count * env.dt
        near_o = nearest_entity_vector(u.position, env.obstacle_centers(t))[0]
        near_z = nearest_entity_vector(u.position, env.ppz_centers())[0]
        prev = u.position
        u = step_kinematics(u, a, env.dt)
        u.status = classify(env, u)
        r = step_reward(env, prev, u, u.status, reward_cfg,
                        None if near_o is None else prev + near_o,
                        None if near_z is None else prev + near_z)
        total += r
        s2 = obs_cfg.observe(env, u)
        if record:
            traj.append(record_step(env, u, a))
        if store:
            agent.buffer.add(s, a, r, s2, u.status in TERMINAL)
        if learn:
            agent_learn_step(agent, learn_rng)
        s = s2
        if u.status.terminal:
            return EpisodeOutcome(u.status, u.step_count, total, epsilon, traj)


def rolling_rates(outcomes, window: int = 100) -> dict[Status, np.ndarray]:
    """Per-episode fraction of each outcome over the trailing ``window`` episodes."""
    if window < 1:
        raise ValueError("window must be >= 1")
    statuses = [o.status if isinstance(o, EpisodeOutcome) else Status(o) for o in outcomes]
    n = len(statuses)
    rates = {}
    k = np.arange(1, n + 1)
    denom = np.minimum(k, window)
    for s in OUTCOMES:
        hits = np.cumsum([x is s for x in statuses], dtype=np.int64)
        lagged = np.concatenate([np.zeros(window, np.int64), hits])[:n]
        rates[s] = (hits - lagged) / denom
    return rates


@dataclass
class TrainingMetrics:
    outcomes: list[EpisodeOutcome] = field(default_factory=list)
    window: int = 100

    def rates(self) -> dict[Status, np.ndarray]:
        return rolling_rates(self.outcomes, self.window)

    def final_rate(self, status: Status = Status.SUCCESS) -> float:
        if not self.outcomes:
            return math.nan
        return float(self.rates()[status][-1])

    def rows(self) -> list[dict]:
        rates = self.rates()
        out = []
        for i, o in enumerate(self.outcomes):
            out.append({
                "episode": i + 1, "outcome": o.status.value, "steps": o.steps,
                "cumulative_reward": repr(float(o.cumulative_reward)),
                "rolling_success": repr(float(rates[Status.SUCCESS][i])),
                "rolling_collision": repr(float(rates[Status.COLLISION][i])),
                "rolling_ppz": repr(float(rates[Status.PPZ][i])),
                "rolling_exit": repr(float(rates[Status.EXITED][i])),
                "epsilon": repr(float(o.epsilon)),
            })
        return out

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows())
        return path


@dataclass
class StageSpec:
    name: str
    scenario: ScenarioConfig
    episodes: int
    reward: RewardConfig = RewardConfig()
    init: str | None = None  # None: random (or previous stage); else checkpoint path

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


def train_stage(spec: StageSpec, agent: Agent | None, hyper: DdpgHyperparams, master_seed: int,
                *, stage_index: int = 0, obs_cfg: ObservationConfig = ObservationConfig(),
                window: int = 100, checkpoint_every: int = 0,
                on_checkpoint: Callable[[Agent, int], None] | None = None,
                progress_every: int = 0) -> tuple[Agent, TrainingMetrics]:
    """Train for ``spec.episodes`` episodes on freshly sampled layouts.

    Episode ``k`` of stage ``i`` draws its layout from stream
    ``("scenario", i, k)`` and its exploration from ``("explore", i, k)``,
    so any single episode can be regenerated in isolation.
    """
    if agent is None:
        agent = Agent(hyper, seeding.stream(master_seed, "init"))
    learn_rng = seeding.stream(master_seed, "replay", stage_index)
    metrics = TrainingMetrics(window=window)
    for k in range(spec.episodes):
        env = sample_scenario(spec.scenario, seeding.stream(master_seed, "scenario", stage_index, k))
        eps = epsilon_at(k, spec.episodes, agent.hyper)
        out = run_episode(agent, env, eps, seeding.stream(master_seed, "explore", stage_index, k),
                          learn=True, learn_rng=learn_rng, reward_cfg=spec.reward, obs_cfg=obs_cfg)
        metrics.outcomes.append(out)
        if progress_every and (k + 1) % progress_every == 0:
            log.info("%s episode %d: rolling success %.3f eps %.3f", spec.name, k + 1,
                     metrics.final_rate(), eps)
        if checkpoint_every and on_checkpoint and (k + 1) % checkpoint_every == 0:
            on_checkpoint(agent, k + 1)
    return agent, metrics


def compare_reward_modes(spec: StageSpec, hyper: DdpgHyperparams, master_seed: int,
                         *, obs_cfg: ObservationConfig = ObservationConfig(), window: int = 100,
                         modes=("dot", "distance"), progress_every: int = 0
                         ) -> dict[str, TrainingMetrics]:
    """Train one fresh agent per shaping mode on identical layouts and seeds."""
    out = {}
    for mode in modes:
        arm = replace(spec, name=f"{spec.name}-{mode}", reward=replace(spec.reward, mode=mode))
        out[mode] = train_stage(arm, None, hyper, master_seed, obs_cfg=obs_cfg, window=window,
                                progress_every=progress_every)[1]
    return out
