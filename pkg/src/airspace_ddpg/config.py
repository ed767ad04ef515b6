"""Run configuration: YAML parsing, named profiles, env overrides, run manifests.

A config file is a YAML mapping.  Every key is optional; omitted keys take
the value of the selected ``profile`` (``desk`` unless stated).  Sections::

    profile: desk | paper | custom
    master_seed: 0
    output_dir: runs
    metrics_window: 100
    checkpoint_every: 500
    observation:     {sensing_radius, scale}
    hyperparameters: DdpgHyperparams fields
    reward:          RewardConfig fields
    scenario:        ScenarioConfig fields (template shared by all stages)
    stages:          list of {name, episodes, init, scenario: {...}, reward: {...}}
    evaluation:
      single_ppz:    {trials, bounds, max_steps, ...}
      capacity:      {n_list, trials, bounds, origin_spacing, max_steps, ...}

``init`` is ``random``, ``previous`` (transfer from the preceding stage) or a
checkpoint path relative to the config file.  The environment variables
``AIRSPACE_OUTPUT_DIR`` and ``AIRSPACE_SEED`` override ``output_dir`` and
``master_seed``.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import yaml

from .airspace import ScenarioConfig
from .ddpg import DdpgHyperparams
from .evaluation import ScenarioSpec
from .rewards import RewardConfig
from .training import ObservationConfig, StageSpec

PROFILES = ("desk", "paper", "custom")
ENV_OUTPUT_DIR = "AIRSPACE_OUTPUT_DIR"
ENV_SEED = "AIRSPACE_SEED"
INIT_RANDOM, INIT_PREVIOUS = "random", "previous"

try:
    from importlib.metadata import version as _version
    ARTIFACT_VERSION = _version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    ARTIFACT_VERSION = "0+unknown"


class ConfigError(ValueError):
    """Base class; ``key`` names the offending entry (dotted path) when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ConfigFileError(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass


class ConfigRangeError(ConfigError):
    pass


# --- profiles -------------------------------------------------------------------

def _spec_defaults() -> dict:
    return {k: v for k, v in ScenarioSpec().__dict__.items() if k not in ("kind", "n_uavs")}


def _desk() -> dict:
    return {
        "profile": "desk",
        "master_seed": 0,
        "output_dir": "runs",
        "metrics_window": 100,
        "checkpoint_every": 500,
        "observation": {"sensing_radius": 2000.0, "scale": 4000.0},
        "hyperparameters": DdpgHyperparams().to_dict(),
        "reward": RewardConfig().to_dict(),
        "scenario": {**ScenarioConfig().to_dict(), "bounds": 4000.0, "max_steps": 300},
        "stages": [
            {"name": "free", "episodes": 1500, "init": INIT_RANDOM, "scenario": {}, "reward": {}},
            {"name": "obstacles", "episodes": 1500, "init": INIT_PREVIOUS,
             "scenario": {"bounds": 6000.0, "n_static": 3, "n_ppz": 3, "max_steps": 500},
             "reward": {}},
            {"name": "mixed", "episodes": 1500, "init": INIT_PREVIOUS,
             "scenario": {"bounds": 6000.0, "n_static": 18, "n_dynamic": 2, "n_ppz": 3,
                          "max_steps": 500},
             "reward": {}},
        ],
        "evaluation": {
            "single_ppz": {**_spec_defaults(), "trials": 50, "bounds": 6000.0},
            "capacity": {"n_list": [1, 2, 4, 6, 8, 10], **_spec_defaults(), "trials": 100},
        },
    }


def _paper() -> dict:
    d = _desk()
    d["profile"] = "paper"
    d["observation"]["scale"] = 10_000.0
    d["hyperparameters"].update(discount=0.9, tau=1.0, buffer_capacity=10_000_000,
                                lr_critic=5e-4, lr_actor=5e-5, hidden=[300, 400],
                                optimizer="sgd")
    d["scenario"].update(bounds=10_000.0, max_steps=800, dt=1.0)
    d["stages"] = [
        {"name": "free", "episodes": 15000, "init": INIT_RANDOM, "scenario": {}, "reward": {}},
        {"name": "obstacles", "episodes": 15000, "init": INIT_PREVIOUS,
         "scenario": {"n_static": 3, "n_ppz": 3}, "reward": {}},
        {"name": "mixed", "episodes": 15000, "init": INIT_PREVIOUS,
         "scenario": {"n_static": 18, "n_dynamic": 2, "n_ppz": 3}, "reward": {}},
    ]
    d["evaluation"]["single_ppz"]["bounds"] = 10_000.0
    return d


def _custom() -> dict:
    d = _desk()
    d["profile"] = "custom"
    d["observation"]["scale"] = 10_000.0
    d["scenario"] = ScenarioConfig().to_dict()
    d["stages"] = [{"name": "free", "episodes": 1000, "init": INIT_RANDOM, "scenario": {},
                    "reward": {}}]
    d["evaluation"]["single_ppz"]["bounds"] = 10_000.0
    return d


PROFILE_DEFAULTS = {"desk": _desk, "paper": _paper, "custom": _custom}
STAGE_KEYS = {"name", "episodes", "init", "scenario", "reward"}


# --- config object ----------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    profile: str
    master_seed: int
    output_dir: Path
    metrics_window: int
    checkpoint_every: int
    observation: ObservationConfig
    hyper: DdpgHyperparams
    reward: RewardConfig
    scenario: ScenarioConfig
    stages: tuple[StageSpec, ...]
    single_ppz: ScenarioSpec
    capacity: ScenarioSpec
    capacity_n: tuple[int, ...]
    base_dir: Path = field(default=Path("."), compare=False)

    def to_dict(self) -> dict:
        """Every effective value; ``parse_config_text`` of its YAML dump is a fixed point."""
        def spec_dict(s: ScenarioSpec, drop=()):
            return {k: v for k, v in s.__dict__.items() if k not in ("kind", "n_uavs", *drop)}

        stages = []
        for st in self.stages:
            stages.append({"name": st.name, "episodes": st.episodes, "init": st.init or INIT_RANDOM,
                           "scenario": st.scenario.to_dict(), "reward": st.reward.to_dict()})
        return {
            "profile": self.profile,
            "master_seed": self.master_seed,
            "output_dir": str(self.output_dir),
            "metrics_window": self.metrics_window,
            "checkpoint_every": self.checkpoint_every,
            "observation": {"sensing_radius": self.observation.sensing_radius,
                            "scale": self.observation.scale},
            "hyperparameters": self.hyper.to_dict(),
            "reward": self.reward.to_dict(),
            "scenario": self.scenario.to_dict(),
            "stages": stages,
            "evaluation": {
                "single_ppz": spec_dict(self.single_ppz),
                "capacity": {"n_list": list(self.capacity_n), **spec_dict(self.capacity)},
            },
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def stage_path(self, stage: StageSpec, suffix: str) -> Path:
        return self.output_dir / f"{stage.name}{suffix}"


def _merge(base: dict, override, where: str) -> dict:
    """Overlay ``override`` onto ``base`` recursively, rejecting unknown keys."""
    if override is None:
        return base
    if not isinstance(override, dict):
        raise ConfigSyntaxError(f"{where or 'config'}: expected a mapping, got "
                                f"{type(override).__name__}", where or None)
    out = dict(base)
    for k, v in override.items():
        key = f"{where}.{k}" if where else str(k)
        if k not in base:
            raise UnknownKeyError(f"unknown key {key!r}", key)
        if isinstance(base[k], dict):
            out[k] = _merge(base[k], v, key)
        else:
            out[k] = v
    return out


def _build(cls, values: dict, where: str, tuple_fields=()):
    unknown = set(values) - cls.field_names()
    if unknown:
        key = f"{where}.{sorted(unknown)[0]}"
        raise UnknownKeyError(f"unknown key {key!r}", key)
    kw = {k: (tuple(v) if k in tuple_fields and isinstance(v, list) else v)
          for k, v in values.items()}
    try:
        return cls(**kw)
    except (ValueError, TypeError) as exc:
        name = str(exc).split("=")[0].split(" ")[0]
        key = f"{where}.{name}" if name in values else where
        raise ConfigRangeError(f"{key}: {exc}", key) from None


def _number(d: dict, key: str, where: str, ok, kind=int):
    v = d[key]
    full = f"{where}{key}"
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and v != int(v)):
        raise ConfigRangeError(f"{full}: expected {kind.__name__}, got {v!r}", full)
    if not ok(v):
        raise ConfigRangeError(f"{full}={v!r} out of range", full)
    return kind(v)


def _spec(values: dict, kind: str, where: str) -> ScenarioSpec:
    allowed = set(ScenarioSpec.__dataclass_fields__) - {"kind", "n_uavs"}
    unknown = set(values) - allowed
    if unknown:
        key = f"{where}.{sorted(unknown)[0]}"
        raise UnknownKeyError(f"unknown key {key!r}", key)
    try:
        return ScenarioSpec(kind=kind, **values)
    except (ValueError, TypeError) as exc:
        raise ConfigRangeError(f"{where}: {exc}", where) from None


def build_config(data: dict | None, base_dir: Path = Path("."), env: dict | None = None) -> RunConfig:
    """Validate a raw mapping (already YAML-decoded) into a RunConfig."""
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigSyntaxError("config root must be a mapping")
    env = os.environ if env is None else env
    profile = data.get("profile", "desk")
    if profile not in PROFILES:
        raise ConfigRangeError(f"profile must be one of {PROFILES}, got {profile!r}", "profile")
    defaults = PROFILE_DEFAULTS[profile]()
    raw_stages = data.get("stages")
    d = _merge({k: v for k, v in defaults.items() if k != "stages"},
               {k: v for k, v in data.items() if k != "stages"}, "")

    if env.get(ENV_OUTPUT_DIR):
        d["output_dir"] = env[ENV_OUTPUT_DIR]
    if env.get(ENV_SEED):
        try:
            d["master_seed"] = int(env[ENV_SEED])
        except ValueError:
            raise ConfigRangeError(f"{ENV_SEED} must be an integer", "master_seed") from None

    seed = _number(d, "master_seed", "", lambda v: v >= 0)
    window = _number(d, "metrics_window", "", lambda v: v >= 1)
    every = _number(d, "checkpoint_every", "", lambda v: v >= 0)
    obs = d["observation"]
    obs_cfg = ObservationConfig(
        sensing_radius=_number(obs, "sensing_radius", "observation.", lambda v: v > 0, float),
        scale=_number(obs, "scale", "observation.", lambda v: v > 0, float))
    hyper = _build(DdpgHyperparams, d["hyperparameters"], "hyperparameters", ("hidden",))
    reward = _build(RewardConfig, d["reward"], "reward")
    scenario = _build(ScenarioConfig, d["scenario"], "scenario", ("dynamic_speed",))

    if raw_stages is None:
        raw_stages = defaults["stages"]
    if not isinstance(raw_stages, list) or not raw_stages:
        raise ConfigRangeError("stages must be a non-empty list", "stages")
    stages = []
    names = set()
    for i, st in enumerate(raw_stages):
        where = f"stages[{i}]"
        if not isinstance(st, dict):
            raise ConfigSyntaxError(f"{where}: expected a mapping", where)
        unknown = set(st) - STAGE_KEYS
        if unknown:
            key = f"{where}.{sorted(unknown)[0]}"
            raise UnknownKeyError(f"unknown key {key!r}", key)
        name = str(st.get("name", f"stage{i}"))
        if name in names:
            raise ConfigRangeError(f"{where}.name: duplicate stage name {name!r}", f"{where}.name")
        names.add(name)
        st = {"episodes": 1, **st}
        episodes = _number(st, "episodes", f"{where}.", lambda v: v >= 1)
        s_cfg = _build(ScenarioConfig, _merge(scenario.to_dict(), st.get("scenario"),
                                              f"{where}.scenario"),
                       f"{where}.scenario", ("dynamic_speed",))
        r_cfg = _build(RewardConfig, _merge(reward.to_dict(), st.get("reward"), f"{where}.reward"),
                       f"{where}.reward")
        init = st.get("init", INIT_RANDOM if i == 0 else INIT_PREVIOUS)
        if init is None:
            init = INIT_RANDOM
        if init == INIT_PREVIOUS and i == 0:
            raise ConfigRangeError(f"{where}.init: first stage has no previous stage",
                                   f"{where}.init")
        if init not in (INIT_RANDOM, INIT_PREVIOUS):
            path = Path(init)
            path = path if path.is_absolute() else base_dir / path
            if not path.is_file():
                raise ConfigFileError(f"{where}.init: checkpoint {path} not found", f"{where}.init")
            init = str(path)
        stages.append(StageSpec(name, s_cfg, episodes, r_cfg, init))

    ev = d["evaluation"]
    cap = dict(ev["capacity"])
    n_list = cap.pop("n_list")
    if (not isinstance(n_list, list) or not n_list
            or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in n_list)):
        raise ConfigRangeError("evaluation.capacity.n_list must be a list of integers >= 1",
                               "evaluation.capacity.n_list")
    single = _spec(ev["single_ppz"], "single_ppz", "evaluation.single_ppz")
    capacity = _spec(cap, "multi_uav", "evaluation.capacity")
    for n in n_list:
        try:
            ScenarioSpec(kind="multi_uav", n_uavs=n, **cap)
        except ValueError as exc:
            raise ConfigRangeError(f"evaluation.capacity.n_list: {exc}",
                                   "evaluation.capacity.n_list") from None

    return RunConfig(profile=profile, master_seed=seed, output_dir=Path(d["output_dir"]),
                     metrics_window=window, checkpoint_every=every, observation=obs_cfg,
                     hyper=hyper, reward=reward, scenario=scenario, stages=tuple(stages),
                     single_ppz=single, capacity=capacity, capacity_n=tuple(n_list),
                     base_dir=base_dir)


def parse_config_text(text: str, base_dir: Path = Path("."), env: dict | None = None) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(f"malformed YAML: {exc}") from None
    return build_config(data, base_dir, env)


def parse_config(path, env: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), path.parent, env)


# --- manifest ---------------------------------------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config: dict
    artifact_version: str = ARTIFACT_VERSION
    started: str = field(default_factory=_now)
    finished: str | None = None
    checkpoints: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def paths(self):
        for group in (self.checkpoints, self.metrics, self.outputs):
            yield from group.values()

    def finalize(self, path) -> Path:
        missing = [p for p in self.paths() if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"manifest lists missing files: {missing}")
        self.finished = _now()
        path = Path(path)
        path.write_text(json.dumps(copy.deepcopy(self.__dict__), indent=2, sort_keys=True) + "\n")
        return path
