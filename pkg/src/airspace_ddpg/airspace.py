"""2D constant-altitude airspace: kinematics, obstacles, prior-permission zones.

Positions live in the square ``[0, bounds]^2`` (metres).  A UAV is a point
mass whose control input is a planar acceleration; velocity and position
follow by semi-implicit Euler integration.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

G = 9.81
MAX_ACCEL = 0.3 * G
MAX_SPEED = 70.0

OBSTACLE_SAFETY = 50.0
PPZ_SAFETY = 1000.0
ARRIVAL_RADIUS = 100.0
SENSING_RADIUS = 2000.0

SCENARIO_FORMAT = "airspace-scenario/1"


class ScenarioError(RuntimeError):
    """Raised when a scenario cannot be sampled within the rejection budget."""


class Status(str, enum.Enum):
    FLYING = "flying"
    SUCCESS = "success"
    COLLISION = "collision"
    PPZ = "ppz"
    EXITED = "exit"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not Status.FLYING


OUTCOMES = (Status.SUCCESS, Status.COLLISION, Status.PPZ, Status.EXITED, Status.TIMEOUT)


def vec(x, y=None) -> np.ndarray:
    if y is None:
        return np.asarray(x, dtype=np.float64).reshape(2)
    return np.array([x, y], dtype=np.float64)


def unit(v: np.ndarray) -> np.ndarray:
    """Unit vector along ``v``; the zero vector maps to zero."""
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        return np.zeros(2)
    return v / n


@dataclass
class UavState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    status: Status = Status.FLYING
    step_count: int = 0

    @property
    def speed(self) -> float:
        return math.hypot(self.velocity[0], self.velocity[1])


@dataclass(frozen=True)
class StaticObstacle:
    center: np.ndarray
    safety_radius: float = OBSTACLE_SAFETY

    def __post_init__(self):
        if not self.safety_radius > 0:
            raise ValueError("safety_radius must be positive")


@dataclass(frozen=True)
class DynamicObstacle:
    """Point obstacle oscillating along ``direction`` around ``anchor``."""

    anchor: np.ndarray
    direction: np.ndarray
    speed: float
    half_amplitude: float = 500.0
    phase_offset: float = 0.0
    safety_radius: float = OBSTACLE_SAFETY

    def __post_init__(self):
        if not 20.0 <= self.speed <= 50.0:
            raise ValueError(f"dynamic obstacle speed {self.speed} outside [20, 50] m/s")
        if self.half_amplitude <= 0 or self.safety_radius <= 0:
            raise ValueError("half_amplitude and safety_radius must be positive")
        if abs(self.phase_offset) > self.half_amplitude:
            raise ValueError("phase_offset must lie within +/- half_amplitude")

    def position(self, t: float) -> np.ndarray:
        return self.anchor + self.direction * triangle_wave(self.speed * t + self.phase_offset,
                                                            self.half_amplitude)


@dataclass(frozen=True)
class Ppz:
    center: np.ndarray
    safety_radius: float = PPZ_SAFETY

    def __post_init__(self):
        if not self.safety_radius > 0:
            raise ValueError("safety_radius must be positive")


@dataclass
class EnvInstance:
    origin: np.ndarray
    destination: np.ndarray
    bounds: float = 10_000.0
    statics: list = field(default_factory=list)
    dynamics: list = field(default_factory=list)
    ppzs: list = field(default_factory=list)
    arrival_radius: float = ARRIVAL_RADIUS
    max_steps: int = 800
    dt: float = 1.0

    def __post_init__(self):
        self.origin = vec(self.origin)
        self.destination = vec(self.destination)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name, p in (("origin", self.origin), ("destination", self.destination)):
            if not inside(p, self.bounds):
                raise ValueError(f"{name} {p} outside bounds {self.bounds}")
        if np.linalg.norm(self.destination - self.origin) <= self.arrival_radius:
            raise ValueError("origin lies within the arrival radius of the destination")
        self._static_xy = _centers(self.statics)
        self._static_r = np.array([o.safety_radius for o in self.statics])
        self._ppz_xy = _centers(self.ppzs)
        self._ppz_r = np.array([z.safety_radius for z in self.ppzs])

    def initial_state(self) -> UavState:
        return UavState(position=self.origin.copy())

    def obstacle_centers(self, t: float) -> np.ndarray:
        """Static then dynamic obstacle centres at time ``t``, shape (n, 2)."""
        if not self.dynamics:
            return self._static_xy
        dyn = np.array([d.position(t) for d in self.dynamics])
        return np.concatenate([self._static_xy, dyn]) if len(self.statics) else dyn

    def obstacle_radii(self) -> np.ndarray:
        return np.concatenate([self._static_r, [d.safety_radius for d in self.dynamics]])

    def ppz_centers(self) -> np.ndarray:
        return self._ppz_xy

    def ppz_radii(self) -> np.ndarray:
        return self._ppz_r

    def to_dict(self) -> dict:
        def xy(v):
            return [float(v[0]), float(v[1])]
        return {
            "format": SCENARIO_FORMAT,
            "bounds_m": self.bounds,
            "origin_m": xy(self.origin),
            "destination_m": xy(self.destination),
            "arrival_radius_m": self.arrival_radius,
            "max_steps": self.max_steps,
            "dt_s": self.dt,
            "static_obstacles": [
                {"center_m": xy(o.center), "safety_radius_m": o.safety_radius} for o in self.statics
            ],
            "dynamic_obstacles": [
                {"anchor_m": xy(d.anchor), "direction": xy(d.direction), "speed_mps": d.speed,
                 "half_amplitude_m": d.half_amplitude, "phase_offset_m": d.phase_offset,
                 "safety_radius_m": d.safety_radius}
                for d in self.dynamics
            ],
            "ppzs": [{"center_m": xy(z.center), "safety_radius_m": z.safety_radius} for z in self.ppzs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvInstance":
        if d.get("format") != SCENARIO_FORMAT:
            raise ValueError(f"unsupported scenario format {d.get('format')!r}")
        return cls(
            origin=vec(d["origin_m"]),
            destination=vec(d["destination_m"]),
            bounds=float(d["bounds_m"]),
            statics=[StaticObstacle(vec(o["center_m"]), float(o["safety_radius_m"]))
                     for o in d.get("static_obstacles", [])],
            dynamics=[DynamicObstacle(vec(o["anchor_m"]), vec(o["direction"]), float(o["speed_mps"]),
                                      float(o["half_amplitude_m"]), float(o["phase_offset_m"]),
                                      float(o["safety_radius_m"]))
                      for o in d.get("dynamic_obstacles", [])],
            ppzs=[Ppz(vec(z["center_m"]), float(z["safety_radius_m"])) for z in d.get("ppzs", [])],
            arrival_radius=float(d.get("arrival_radius_m", ARRIVAL_RADIUS)),
            max_steps=int(d.get("max_steps", 800)),
            dt=float(d.get("dt_s", 1.0)),
        )


def save_scenario(env: EnvInstance, path, **extra) -> Path:
    """Write ``env`` as JSON; ``extra`` keys (e.g. a seed) are stored alongside."""
    payload = env.to_dict()
    payload.update(extra)
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def load_scenario(path) -> tuple[EnvInstance, dict]:
    d = json.loads(Path(path).read_text())
    env = EnvInstance.from_dict(d)
    known = env.to_dict().keys()
    return env, {k: v for k, v in d.items() if k not in known}


def _centers(entities) -> np.ndarray:
    if not entities:
        return np.zeros((0, 2))
    return np.array([e.center for e in entities], dtype=np.float64)


def inside(p: np.ndarray, bounds: float) -> bool:
    return 0.0 <= p[0] <= bounds and 0.0 <= p[1] <= bounds


def clamp_action(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if (a - a).sum() != 0.0:  # inf - inf and nan - nan are nan
        raise ValueError(f"non-finite action {a}")
    return np.minimum(np.maximum(a, -MAX_ACCEL), MAX_ACCEL)


def step_kinematics(u: UavState, a: np.ndarray, dt: float = 1.0) -> UavState:
    """Advance one tick: v' = v + a dt (speed-capped by rescaling), p' = p + v' dt."""
    if u.status is not Status.FLYING:
        raise ValueError(f"cannot step a UAV in terminal status {u.status.value}")
    v = u.velocity + a * dt
    speed = math.hypot(v[0], v[1])
    if speed > MAX_SPEED:
        v = v * (MAX_SPEED / speed)
    return UavState(position=u.position + v * dt, velocity=v, status=u.status,
                    step_count=u.step_count + 1)


def triangle_wave(s, half_amplitude: float):
    """Triangle wave through 0 at s=0 rising to +A at s=A; period 4A."""
    a = half_amplitude
    return np.abs(np.mod(s - a, 4 * a) - 2 * a) - a


def step_dynamic_obstacles(dynamics, t: float) -> np.ndarray:
    """Positions of every dynamic obstacle at time ``t`` (shape (n, 2))."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return np.array([d.position(t) for d in dynamics]).reshape(-1, 2)


def nearest_entity_vector(p: np.ndarray, centers) -> tuple[np.ndarray | None, float]:
    """Offset from ``p`` to the nearest centre and its distance.

    Returns ``(None, inf)`` for an empty set.  Ties go to the lowest index.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if len(centers) == 0:
        return None, math.inf
    offsets = centers - p
    d = np.hypot(offsets[:, 0], offsets[:, 1])
    i = int(np.argmin(d))
    return offsets[i], float(d[i])


def classify(env: EnvInstance, u: UavState) -> Status:
    """Outcome of ``u`` in ``env``.

    Priority: collision > PPZ entry > exit > success > timeout > flying.
    """
    p = u.position
    t = u.step_count * env.dt
    centers = env.obstacle_centers(t)
    if len(centers):
        d = np.hypot(centers[:, 0] - p[0], centers[:, 1] - p[1])
        if np.any(d < env.obstacle_radii()):
            return Status.COLLISION
    if len(env.ppzs):
        z = env.ppz_centers()
        d = np.hypot(z[:, 0] - p[0], z[:, 1] - p[1])
        if np.any(d < env.ppz_radii()):
            return Status.PPZ
    if not inside(p, env.bounds):
        return Status.EXITED
    if math.hypot(env.destination[0] - p[0], env.destination[1] - p[1]) <= env.arrival_radius:
        return Status.SUCCESS
    if u.step_count >= env.max_steps:
        return Status.TIMEOUT
    return Status.FLYING


@dataclass
class Observation:
    to_destination: np.ndarray
    velocity: np.ndarray
    to_nearest_obstacle: np.ndarray
    to_nearest_ppz: np.ndarray
    normalized: bool = False

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.to_destination, self.velocity,
                               self.to_nearest_obstacle, self.to_nearest_ppz])


OBS_DIM = 8


def _saturate(offset, dist, radius, velocity, fallback):
    if offset is None or dist > radius:
        away = unit(velocity)
        if not away.any():
            away = unit(fallback)
        if not away.any():
            away = np.array([1.0, 0.0])
        return -radius * away
    return offset


def build_observation(env: EnvInstance, u: UavState, *, sensing_radius: float = SENSING_RADIUS,
                      scale: float | None = None, normalized: bool = True,
                      extra_obstacles: np.ndarray | None = None) -> Observation:
    """Sensor view of ``u``: destination, velocity, nearest obstacle, nearest PPZ.

    Entity offsets beyond ``sensing_radius`` (or absent) are replaced by a
    vector of that length pointing opposite the velocity.  ``scale`` is the
    length used for normalisation (defaults to the bounds side); the
    destination offset is saturated at ``scale`` so normalised components
    stay in [-1, 1].  ``extra_obstacles`` are additional obstacle centres
    (other UAVs in fleet runs).
    """
    scale = env.bounds if scale is None else scale
    p = u.position
    to_dest = env.destination - p
    centers = env.obstacle_centers(u.step_count * env.dt)
    if extra_obstacles is not None and len(extra_obstacles):
        centers = np.concatenate([centers, extra_obstacles]) if len(centers) else extra_obstacles
    o_vec, o_dist = nearest_entity_vector(p, centers)
    z_vec, z_dist = nearest_entity_vector(p, env.ppz_centers())
    to_obs = _saturate(o_vec, o_dist, sensing_radius, u.velocity, to_dest)
    to_ppz = _saturate(z_vec, z_dist, sensing_radius, u.velocity, to_dest)
    if not normalized:
        return Observation(to_dest, u.velocity.copy(), to_obs, to_ppz, normalized=False)
    dist = math.hypot(to_dest[0], to_dest[1])
    if dist > scale:
        to_dest = to_dest * (scale / dist)
    return Observation(to_dest / scale, u.velocity / MAX_SPEED, to_obs / scale, to_ppz / scale,
                       normalized=True)


@dataclass(frozen=True)
class ScenarioConfig:
    """Counts and geometry for random scenario generation."""

    bounds: float = 10_000.0
    n_static: int = 0
    n_dynamic: int = 0
    n_ppz: int = 0
    min_od_distance: float = 1000.0
    endpoint_buffer: float = 200.0
    obstacle_safety: float = OBSTACLE_SAFETY
    ppz_safety: float = PPZ_SAFETY
    dynamic_speed: tuple = (20.0, 50.0)
    half_amplitude: float = 500.0
    arrival_radius: float = ARRIVAL_RADIUS
    max_steps: int = 800
    dt: float = 1.0
    max_tries: int = 10_000
    ppz_on_path: float = 0.0

    def __post_init__(self):
        lo, hi = self.dynamic_speed
        checks = {
            "bounds": self.bounds > 0,
            "n_static": self.n_static >= 0,
            "n_dynamic": self.n_dynamic >= 0,
            "n_ppz": self.n_ppz >= 0,
            "min_od_distance": 0 <= self.min_od_distance < self.bounds * math.sqrt(2),
            "endpoint_buffer": self.endpoint_buffer >= 0,
            "obstacle_safety": self.obstacle_safety > 0,
            "ppz_safety": self.ppz_safety > 0,
            "dynamic_speed": 20.0 <= lo <= hi <= 50.0,
            "half_amplitude": self.half_amplitude > 0,
            "arrival_radius": self.arrival_radius > 0,
            "max_steps": self.max_steps >= 1,
            "dt": self.dt > 0,
            "max_tries": self.max_tries >= 1,
            "ppz_on_path": 0.0 <= self.ppz_on_path <= 1.0,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"{name}={getattr(self, name)!r} out of range")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dynamic_speed"] = list(self.dynamic_speed)
        return d

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    def with_counts(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def sample_scenario(cfg: ScenarioConfig, rng: np.random.Generator) -> EnvInstance:
    """Draw a random episode layout by rejection sampling.

    Origin and destination are uniform in the square, at least
    ``min_od_distance`` apart and outside every safety zone.  Obstacles and
    PPZs keep ``endpoint_buffer`` metres of clearance (beyond their safety
    radius) from both endpoints; PPZs do not overlap one another.  Every
    candidate draw counts against ``max_tries``.
    """
    L = cfg.bounds
    tries = 0
    per_entity = 100

    def draw():
        nonlocal tries
        tries += 1
        if tries > cfg.max_tries:
            raise ScenarioError(
                f"rejection budget of {cfg.max_tries} draws exhausted; "
                f"config too crowded for bounds {L:g} m")
        return rng.uniform(0.0, L, size=2)

    while True:
        origin = draw()
        destination = draw()
        if np.linalg.norm(destination - origin) < max(cfg.min_od_distance, cfg.arrival_radius + 1e-9):
            continue
        ends = (origin, destination)
        heading = unit(destination - origin)
        perp = np.array([-heading[1], heading[0]])

        def clear(center, radius):
            return all(np.linalg.norm(center - e) >= radius + cfg.endpoint_buffer for e in ends)

        on_path = cfg.n_ppz > 0 and cfg.ppz_on_path > 0 and rng.random() < cfg.ppz_on_path
        ppzs = []
        for j in range(cfg.n_ppz):
            for _ in range(per_entity):
                if j == 0 and on_path:
                    t, lateral = draw() / L
                    c = origin + t * (destination - origin) + (lateral - 0.5) * cfg.ppz_safety * perp
                else:
                    c = draw()
                if clear(c, cfg.ppz_safety) and all(
                        np.linalg.norm(c - z.center) >= 2 * cfg.ppz_safety for z in ppzs):
                    ppzs.append(Ppz(c, cfg.ppz_safety))
                    break
            else:
                break
        if len(ppzs) < cfg.n_ppz:
            continue

        statics = []
        for _ in range(cfg.n_static):
            for _ in range(per_entity):
                c = draw()
                if clear(c, cfg.obstacle_safety):
                    statics.append(StaticObstacle(c, cfg.obstacle_safety))
                    break
            else:
                break
        if len(statics) < cfg.n_static:
            continue

        dynamics = []
        A = cfg.half_amplitude
        for _ in range(cfg.n_dynamic):
            for _ in range(per_entity):
                c = draw()
                lo, hi = c - A * perp, c + A * perp
                if all(_point_segment_distance(e, lo, hi) >= cfg.obstacle_safety + cfg.endpoint_buffer
                       for e in ends):
                    dynamics.append(DynamicObstacle(
                        anchor=c, direction=perp.copy(),
                        speed=float(rng.uniform(*cfg.dynamic_speed)),
                        half_amplitude=A, phase_offset=float(rng.uniform(-A, A)),
                        safety_radius=cfg.obstacle_safety))
                    break
            else:
                break
        if len(dynamics) < cfg.n_dynamic:
            continue

        return EnvInstance(origin=origin, destination=destination, bounds=L, statics=statics,
                           dynamics=dynamics, ppzs=ppzs, arrival_radius=cfg.arrival_radius,
                           max_steps=cfg.max_steps, dt=cfg.dt)
