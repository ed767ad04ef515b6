"""Per-step reward compositions for the navigation task."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, fields

import numpy as np

from .airspace import OBSTACLE_SAFETY, PPZ_SAFETY, Status, unit

SHAPING_MODES = ("dot", "distance")
AVOID_FALLOFFS = ("flat", "linear")


@dataclass(frozen=True)
class RewardConfig:
    r1_success: float = 100.0
    r2_exit: float = -100.0
    r3_collision: float = -100.0
    r4_ppz: float = -100.0
    dot_alpha: float = 2.0
    dot_beta: float = 1.0
    dot_gamma: float = 1.0
    dot_threshold: float = 0.9
    dist_alpha: float = 2e-4
    dist_beta: float = 1.0
    avoid_weight_obstacle: float = 0.5
    avoid_weight_ppz: float = 0.5
    alert_radius_obstacle: float = 500.0
    alert_radius_ppz: float = 1500.0
    avoid_falloff: str = "flat"
    mode: str = "dot"

    def __post_init__(self):
        if not 0.0 < self.dot_threshold < 1.0:
            raise ValueError("dot_threshold must lie in (0, 1)")
        if self.dist_alpha <= 0:
            raise ValueError("dist_alpha must be positive")
        for name in ("alert_radius_obstacle", "alert_radius_ppz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.avoid_falloff not in AVOID_FALLOFFS:
            raise ValueError(f"avoid_falloff must be one of {AVOID_FALLOFFS}, "
                             f"got {self.avoid_falloff!r}")
        if self.mode not in SHAPING_MODES:
            raise ValueError(f"mode must be one of {SHAPING_MODES}, got {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass
class StepContext:
    """Everything the reward needs about one transition.

    ``nearest_obstacle`` / ``nearest_ppz`` are centre positions (or None)
    as seen before the move.
    """

    prev_position: np.ndarray
    new_position: np.ndarray
    destination: np.ndarray
    status: Status = Status.FLYING
    nearest_obstacle: np.ndarray | None = None
    nearest_ppz: np.ndarray | None = None

    @property
    def displacement_dir(self) -> np.ndarray:
        return unit(self.new_position - self.prev_position)

    @property
    def distance_to_destination(self) -> float:
        d = self.destination - self.new_position
        return math.hypot(d[0], d[1])


def reward_distance(distance: float, cfg: RewardConfig) -> float:
    if distance < 0:
        raise ValueError("distance must be non-negative")
    return cfg.dist_beta * math.exp(-cfg.dist_alpha * distance) - cfg.dist_beta


def reward_dot(e_f: np.ndarray, e_d: np.ndarray, cfg: RewardConfig) -> float:
    c = float(e_f[0] * e_d[0] + e_f[1] * e_d[1])
    if c > cfg.dot_threshold:
        return cfg.dot_alpha * c - cfg.dot_beta
    return cfg.dot_gamma * c - cfg.dot_beta


def _heading_reward(ctx: StepContext, cfg: RewardConfig) -> float:
    e_f = unit(ctx.destination - ctx.prev_position)
    return reward_dot(e_f, ctx.displacement_dir, cfg)


def _avoidance(center, ctx: StepContext, weight: float, alert: float, safety: float,
               falloff: str = "flat") -> float:
    """Gated dot product of the displacement with the away-from-entity direction.

    ``flat``: full weight anywhere inside the alert radius.  ``linear``: the
    weight ramps from 0 at the alert radius to full at the safety radius.
    """
    if center is None:
        return 0.0
    away = ctx.prev_position - center
    dist = math.hypot(away[0], away[1])
    if dist >= alert:
        return 0.0
    if falloff == "linear":
        weight *= min(1.0, (alert - dist) / max(alert - safety, 1e-9))
    e = unit(away)
    d = ctx.displacement_dir
    return weight * float(e[0] * d[0] + e[1] * d[1])


def total_reward_simple(ctx: StepContext, cfg: RewardConfig) -> float:
    """Obstacle-free composition: arrival bonus, exit penalty, one shaping term."""
    reach = ctx.status is Status.SUCCESS
    exit_ = ctx.status is Status.EXITED
    if reach and exit_:
        raise ValueError("a step cannot both reach the destination and exit")
    if cfg.mode == "dot":
        shaping = _heading_reward(ctx, cfg)
    else:
        shaping = reward_distance(ctx.distance_to_destination, cfg)
    return reach * cfg.r1_success + exit_ * cfg.r2_exit + shaping


def total_reward_full(ctx: StepContext, cfg: RewardConfig) -> float:
    """Terminal terms plus heading, obstacle-avoidance and PPZ-avoidance shaping."""
    terminal = {
        Status.SUCCESS: cfg.r1_success,
        Status.EXITED: cfg.r2_exit,
        Status.COLLISION: cfg.r3_collision,
        Status.PPZ: cfg.r4_ppz,
    }.get(ctx.status, 0.0)
    r5 = _heading_reward(ctx, cfg)
    r6 = _avoidance(ctx.nearest_obstacle, ctx, cfg.avoid_weight_obstacle,
                    cfg.alert_radius_obstacle, OBSTACLE_SAFETY, cfg.avoid_falloff)
    r7 = _avoidance(ctx.nearest_ppz, ctx, cfg.avoid_weight_ppz, cfg.alert_radius_ppz,
                    PPZ_SAFETY, cfg.avoid_falloff)
    return terminal + r5 + r6 + r7
