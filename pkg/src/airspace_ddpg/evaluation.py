"""Frozen-policy evaluation: single-PPZ detours and multi-UAV capacity sweeps."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import seeding
from .airspace import (OBSTACLE_SAFETY, OUTCOMES, EnvInstance, Ppz, ScenarioError,
                       Status, UavState, clamp_action, classify, step_kinematics, unit)
from .ddpg import Agent
from .training import ObservationConfig, record_step, run_episode

TRAJECTORY_COLUMNS = ["t", "uav_id", "x", "y", "vx", "vy", "ax", "ay", "d_dest", "d_obst", "d_ppz"]
CAPACITY_COLUMNS = ["n_uavs", "trials", "success", "collision", "ppz", "exit", "timeout",
                    "success_ci"]

Policy = Callable[[np.ndarray, UavState, EnvInstance], np.ndarray]


def actor_policy(agent: Agent) -> Policy:
    return lambda s, u, env: agent.act(s)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "multi_uav"  # or "single_ppz"
    n_uavs: int = 1
    bounds: float = 10_000.0
    origin_spacing: float = 900.0
    trials: int = 100
    max_steps: int = 800
    min_od_distance: float = 1000.0
    ppz_offset: float = 200.0
    ppz_endpoint_buffer: float = 200.0
    separation: float = OBSTACLE_SAFETY
    max_tries: int = 10_000

    def __post_init__(self):
        if self.kind not in ("multi_uav", "single_ppz"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n_uavs < 1 or self.trials < 1:
            raise ValueError("n_uavs and trials must be >= 1")
        # packing bound: discs of radius spacing/2 around each origin must fit
        # in the square grown by spacing/2
        area = (self.bounds + self.origin_spacing) ** 2
        if self.n_uavs > 1 and self.n_uavs * math.pi * (self.origin_spacing / 2) ** 2 > area:
            raise ValueError(f"{self.n_uavs} origins {self.origin_spacing} m apart cannot fit "
                             f"in {self.bounds} m bounds")


@dataclass
class TrajectoryLog:
    rows: list[tuple] = field(default_factory=list)

    def add(self, t, uav_id, u: UavState, a, d_dest, d_obst, d_ppz):
        self.rows.append((float(t), int(uav_id), float(u.position[0]), float(u.position[1]),
                          float(u.velocity[0]), float(u.velocity[1]), float(a[0]), float(a[1]),
                          float(d_dest), float(d_obst), float(d_ppz)))

    def __len__(self):
        return len(self.rows)

    def for_uav(self, uav_id: int) -> list[tuple]:
        return [r for r in self.rows if r[1] == uav_id]


def export_timeseries(log: TrajectoryLog, path) -> Path:
    """Write the log as CSV; floats use ``repr`` so output is byte-stable."""
    if not len(log):
        raise ValueError("empty trajectory log")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for r in log.rows:
            w.writerow([repr(r[0]), r[1], *(repr(x) for x in r[2:])])
    return path


@dataclass
class CapacityResult:
    n_uavs: int
    trials: int
    counts: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def rate(self, status: Status) -> float:
        return self.counts.get(status, 0) / self.total if self.total else math.nan

    @property
    def success_rate(self) -> float:
        return self.rate(Status.SUCCESS)

    @property
    def success_ci(self) -> float:
        """Normal-approximation 95% half-width of the pooled success rate."""
        p = self.rate(Status.SUCCESS)
        return 1.959963984540054 * math.sqrt(p * (1 - p) / self.total)

    def row(self) -> dict:
        return {"n_uavs": self.n_uavs, "trials": self.trials,
                "success": self.rate(Status.SUCCESS), "collision": self.rate(Status.COLLISION),
                "ppz": self.rate(Status.PPZ), "exit": self.rate(Status.EXITED),
                "timeout": self.rate(Status.TIMEOUT), "success_ci": self.success_ci}


def write_capacity_csv(results, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CAPACITY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in results:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return path


# --- scenario 1: one PPZ across the direct path -------------------------------

def single_ppz_feasible(origin, destination, center, radius: float, buffer: float = 0.0) -> bool:
    """Both endpoints clear of the PPZ safety disc by at least ``buffer``."""
    return all(np.linalg.norm(np.asarray(p) - center) >= radius + buffer
               for p in (origin, destination))


def sample_single_ppz(spec: ScenarioSpec, rng: np.random.Generator,
                      ppz_radius: float = 1000.0) -> EnvInstance:
    """Random endpoints with a PPZ near the midpoint of the segment between them."""
    for _ in range(spec.max_tries):
        o, d = rng.uniform(0, spec.bounds, size=(2, 2))
        offset = rng.uniform(-spec.ppz_offset, spec.ppz_offset)
        heading = unit(d - o)
        center = (o + d) / 2 + offset * np.array([-heading[1], heading[0]])
        if np.linalg.norm(d - o) < spec.min_od_distance:
            continue
        if single_ppz_feasible(o, d, center, ppz_radius, spec.ppz_endpoint_buffer):
            return EnvInstance(origin=o, destination=d, bounds=spec.bounds,
                               ppzs=[Ppz(center, ppz_radius)], max_steps=spec.max_steps)
    raise ScenarioError("could not place a feasible single-PPZ scenario")


def run_single_ppz(policy: Policy, spec: ScenarioSpec, master_seed: int = 0,
                   obs_cfg: ObservationConfig = ObservationConfig(),
                   log_trial: int = 0) -> tuple[CapacityResult, TrajectoryLog, list]:
    """Greedy rollouts through single-PPZ layouts.

    Returns aggregate outcome counts, the trajectory of trial ``log_trial``,
    and the per-trial (env, outcome) pairs.
    """
    result = CapacityResult(1, spec.trials, {s: 0 for s in OUTCOMES})
    log = TrajectoryLog()
    runs = []
    for k in range(spec.trials):
        env = sample_single_ppz(spec, seeding.stream(master_seed, "evaluate", 0, k))
        out = run_episode(None, env, 0.0, None, policy=policy, obs_cfg=obs_cfg, record=True)
        result.counts[out.status] += 1
        runs.append((env, out))
        if k == log_trial:
            for rec in out.trajectory:
                log.add(rec.t, 0, UavState(rec.position, rec.velocity), rec.acceleration,
                        rec.d_dest, rec.d_obst, rec.d_ppz)
    return result, log, runs


# --- scenario 2: fleets ---------------------------------------------------------

def sample_fleet(spec: ScenarioSpec, rng: np.random.Generator) -> list[EnvInstance]:
    """One private environment per UAV; origins pairwise >= origin_spacing apart."""
    origins = []
    tries = 0
    while len(origins) < spec.n_uavs:
        tries += 1
        if tries > spec.max_tries:
            raise ScenarioError(f"could not place {spec.n_uavs} origins {spec.origin_spacing} m "
                                f"apart within {spec.max_tries} draws")
        p = rng.uniform(0, spec.bounds, size=2)
        if all(np.linalg.norm(p - q) >= spec.origin_spacing for q in origins):
            origins.append(p)
    envs = []
    for o in origins:
        while True:
            tries += 1
            if tries > spec.max_tries:
                raise ScenarioError("could not place destinations")
            d = rng.uniform(0, spec.bounds, size=2)
            if np.linalg.norm(d - o) >= spec.min_od_distance:
                break
        envs.append(EnvInstance(origin=o, destination=d, bounds=spec.bounds,
                                max_steps=spec.max_steps))
    return envs


def run_fleet(policy: Policy, envs: list[EnvInstance],
              obs_cfg: ObservationConfig = ObservationConfig(),
              separation: float = OBSTACLE_SAFETY) -> tuple[list[Status], TrajectoryLog]:
    """Fly every UAV synchronously until all are terminal.

    All UAVs observe the pre-tick snapshot.  Other airborne UAVs, and UAVs
    frozen after a collision, appear in the obstacle channel; arrived UAVs
    leave the airspace.  Two UAVs closer than ``separation`` after a tick
    both collide.
    """
    states = [env.initial_state() for env in envs]
    log = TrajectoryLog()
    while any(u.status is Status.FLYING for u in states):
        snapshot = [u.position.copy() for u in states]
        present = [i for i, u in enumerate(states) if u.status in (Status.FLYING, Status.COLLISION)]
        actions = {}
        for i, u in enumerate(states):
            if u.status is not Status.FLYING:
                continue
            others = np.array([snapshot[j] for j in present if j != i]).reshape(-1, 2)
            s = obs_cfg.observe(envs[i], u, extra_obstacles=others)
            actions[i] = clamp_action(policy(s, u, envs[i]))
        for i, a in actions.items():
            states[i] = step_kinematics(states[i], a, envs[i].dt)
        moved = list(actions)
        positions = {i: states[i].position for i in present}
        collided = set()
        for i in moved:
            for j in present:
                if j != i and np.linalg.norm(positions[i] - positions[j]) < separation:
                    collided.add(i)
                    if states[j].status is Status.FLYING:
                        collided.add(j)
        for i in moved:
            states[i].status = Status.COLLISION if i in collided else classify(envs[i], states[i])
        for i in moved:
            others = np.array([positions[j] for j in present if j != i]).reshape(-1, 2)
            rec = record_step(envs[i], states[i], actions[i], extra_obstacles=others)
            log.add(rec.t, i, states[i], rec.acceleration, rec.d_dest, rec.d_obst, rec.d_ppz)
    return [u.status for u in states], log


def run_multi_uav(policy: Policy, spec: ScenarioSpec, rng: np.random.Generator,
                  obs_cfg: ObservationConfig = ObservationConfig()):
    envs = sample_fleet(spec, rng)
    statuses, log = run_fleet(policy, envs, obs_cfg, spec.separation)
    return statuses, log, envs


def capacity_sweep(policy: Policy, n_list, trials_per_n: int, spec: ScenarioSpec,
                   master_seed: int = 0,
                   obs_cfg: ObservationConfig = ObservationConfig()) -> list[CapacityResult]:
    """Pooled per-UAV outcome rates for each fleet size in ``n_list``."""
    results = []
    for n in n_list:
        sub = replace(spec, n_uavs=int(n), trials=trials_per_n)
        res = CapacityResult(int(n), trials_per_n, {s: 0 for s in OUTCOMES})
        for k in range(trials_per_n):
            statuses, _, _ = run_multi_uav(policy, sub, seeding.stream(master_seed, "evaluate", n, k),
                                           obs_cfg)
            for s in statuses:
                res.counts[s] += 1
        results.append(res)
    return results
