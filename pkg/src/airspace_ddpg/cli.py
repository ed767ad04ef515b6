"""Command-line entry point.

Subcommands::

    train <config>                         run the stage list, write metrics/checkpoints
    evaluate <config> <checkpoint>         single-PPZ runs plus the capacity sweep
    capacity <config> <checkpoint> --n 1..10 --trials T
    compare-rewards <config> [--seeds 0 1 2]
    scenario <config> --stage NAME --episode K --out FILE
    replay <scenario-file> <checkpoint> [--out FILE]
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import seeding
from .airspace import load_scenario, sample_scenario, save_scenario
from .checkpoint import load_checkpoint, save_checkpoint, transfer
from .config import (INIT_PREVIOUS, INIT_RANDOM, ConfigError, RunConfig, RunManifest,
                     parse_config)
from .ddpg import Agent
from .evaluation import (TrajectoryLog, actor_policy, capacity_sweep, export_timeseries,
                         run_multi_uav, run_single_ppz, write_capacity_csv)
from .nn import CheckpointError
from .training import ObservationConfig, compare_reward_modes, run_episode, train_stage

log = logging.getLogger("airspace_ddpg")


class CliError(Exception):
    pass


def parse_n_list(text: str) -> list[int]:
    """``"4"``, ``"1,2,4"`` or an inclusive range ``"1..10"``."""
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            values = list(range(lo, hi + 1))
        else:
            values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid fleet size list {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"fleet sizes must be >= 1, got {text!r}")
    return values


def _load_agent(path, cfg: RunConfig | None = None) -> tuple[Agent, ObservationConfig]:
    agent, obs_cfg, _ = load_checkpoint(path)
    if cfg is not None and tuple(agent.hyper.hidden) != tuple(cfg.hyper.hidden):
        log.info("checkpoint hidden layers %s differ from config %s; using checkpoint",
                 agent.hyper.hidden, cfg.hyper.hidden)
    return agent, obs_cfg


# --- train ------------------------------------------------------------------------

def run_training(cfg: RunConfig, only: list[str] | None = None, progress_every: int = 100):
    """Train every stage in order; returns (agent, manifest)."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.dumps())
    manifest = RunManifest(config=cfg.to_dict())
    manifest.outputs["config"] = str(out / "config.yaml")
    agent = None
    for i, stage in enumerate(cfg.stages):
        if only and stage.name not in only:
            agent = None
            continue
        if stage.init == INIT_RANDOM:
            start = None
        elif stage.init == INIT_PREVIOUS:
            if agent is None:
                prev = cfg.stage_path(cfg.stages[i - 1], ".ckpt")
                if not prev.is_file():
                    raise CliError(f"stage {stage.name!r} needs {prev}; train the previous stage")
                agent = load_checkpoint(prev)[0]
            start = transfer(agent, cfg.hyper)
        else:
            start = transfer(load_checkpoint(stage.init)[0], cfg.hyper)
        log.info("stage %s: %d episodes", stage.name, stage.episodes)

        def on_checkpoint(a, k, stage=stage):
            p = save_checkpoint(a, cfg.stage_path(stage, f"_ep{k}.ckpt"), cfg.observation,
                                {"stage": stage.name, "episode": k})
            manifest.checkpoints[f"{stage.name}@{k}"] = str(p)

        agent, metrics = train_stage(stage, start, cfg.hyper, cfg.master_seed, stage_index=i,
                                     obs_cfg=cfg.observation, window=cfg.metrics_window,
                                     checkpoint_every=cfg.checkpoint_every,
                                     on_checkpoint=on_checkpoint, progress_every=progress_every)
        mpath = metrics.write_csv(cfg.stage_path(stage, "_metrics.csv"))
        cpath = save_checkpoint(agent, cfg.stage_path(stage, ".ckpt"), cfg.observation,
                                {"stage": stage.name, "episode": stage.episodes})
        manifest.metrics[stage.name] = str(mpath)
        manifest.checkpoints[stage.name] = str(cpath)
        log.info("stage %s done: rolling success %.3f", stage.name, metrics.final_rate())
    manifest.finalize(out / "manifest.json")
    return agent, manifest


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    only = args.stages.split(",") if args.stages else None
    if only:
        unknown = set(only) - {s.name for s in cfg.stages}
        if unknown:
            raise CliError(f"unknown stage(s): {sorted(unknown)}")
    run_training(cfg, only, args.progress)
    return 0


# --- evaluation -------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    cfg = parse_config(args.config)
    agent, obs_cfg = _load_agent(args.checkpoint, cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    policy = actor_policy(agent)
    res, traj, runs = run_single_ppz(policy, cfg.single_ppz, cfg.master_seed, obs_cfg)
    write_capacity_csv([res], out / "single_ppz.csv")
    export_timeseries(traj, out / "single_ppz_trajectory.csv")
    log.info("single PPZ: success %.3f over %d trials", res.success_rate, res.total)
    results = capacity_sweep(policy, cfg.capacity_n, cfg.capacity.trials, cfg.capacity,
                             cfg.master_seed, obs_cfg)
    write_capacity_csv(results, out / "capacity.csv")
    n_max = max(cfg.capacity_n)
    spec = replace(cfg.capacity, n_uavs=n_max)
    _, fleet_log, _ = run_multi_uav(policy, spec,
                                    seeding.stream(cfg.master_seed, "evaluate", n_max, 0), obs_cfg)
    export_timeseries(fleet_log, out / "capacity_trajectory.csv")
    for r in results:
        log.info("N=%d success %.3f +/- %.3f", r.n_uavs, r.success_rate, r.success_ci)
    return 0


def cmd_capacity(args) -> int:
    cfg = parse_config(args.config)
    agent, obs_cfg = _load_agent(args.checkpoint, cfg)
    trials = args.trials if args.trials is not None else cfg.capacity.trials
    results = capacity_sweep(actor_policy(agent), args.n, trials, cfg.capacity, cfg.master_seed,
                             obs_cfg)
    out = Path(args.out) if args.out else cfg.output_dir / "capacity.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_capacity_csv(results, out)
    for r in results:
        print(f"N={r.n_uavs:3d}  success={r.success_rate:.3f} +/- {r.success_ci:.3f}")
    return 0


def cmd_compare(args) -> int:
    cfg = parse_config(args.config)
    stage = cfg.stages[0]
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in args.seeds:
        arms = compare_reward_modes(stage, cfg.hyper, seed, obs_cfg=cfg.observation,
                                    window=cfg.metrics_window, progress_every=args.progress)
        for mode, metrics in arms.items():
            metrics.write_csv(out / f"compare_{mode}_seed{seed}_metrics.csv")
            rows.append({"seed": seed, "mode": mode, "episodes": len(metrics.outcomes),
                         "final_success": repr(metrics.final_rate())})
    with (out / "compare_rewards.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["seed", "mode", "episodes", "final_success"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"seed {r['seed']}  {r['mode']:<8}  final rolling success {float(r['final_success']):.3f}")
    return 0


# --- single episodes ----------------------------------------------------------------

def cmd_scenario(args) -> int:
    cfg = parse_config(args.config)
    names = [s.name for s in cfg.stages]
    if args.stage not in names:
        raise CliError(f"unknown stage {args.stage!r}; choose from {names}")
    i = names.index(args.stage)
    env = sample_scenario(cfg.stages[i].scenario,
                          seeding.stream(cfg.master_seed, "scenario", i, args.episode))
    save_scenario(env, args.out, stage=args.stage, episode=args.episode,
                  master_seed=cfg.master_seed)
    return 0


def cmd_replay(args) -> int:
    env, extra = load_scenario(args.scenario)
    agent, obs_cfg = _load_agent(args.checkpoint)
    out = run_episode(agent, env, 0.0, None, obs_cfg=obs_cfg, record=True)
    traj = TrajectoryLog()
    for rec in out.trajectory:
        traj.rows.append((float(rec.t), 0, *map(float, rec.position), *map(float, rec.velocity),
                          *map(float, rec.acceleration), rec.d_dest, rec.d_obst, rec.d_ppz))
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    export_timeseries(traj, path)
    print(f"{out.status.value} after {out.steps} steps; trajectory written to {path}")
    return 0


# --- plumbing -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="airspace-ddpg",
                                description="DDPG path planning for UAVs in shared airspace")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    t = sub.add_parser("train", help="run the configured training stages")
    t.add_argument("config")
    t.add_argument("--stages", help="comma-separated subset of stage names to run")
    t.add_argument("--progress", type=int, default=100, help="log every K episodes (0: off)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="single-PPZ runs and capacity sweep")
    e.add_argument("config")
    e.add_argument("checkpoint")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("capacity", help="capacity sweep over fleet sizes")
    c.add_argument("config")
    c.add_argument("checkpoint")
    c.add_argument("--n", type=parse_n_list, required=True, help="e.g. 4, 1,2,4 or 1..10")
    c.add_argument("--trials", type=int, help="trials per fleet size (default: from config)")
    c.add_argument("--out", help="CSV path (default: <output_dir>/capacity.csv)")
    c.set_defaults(func=cmd_capacity)

    r = sub.add_parser("compare-rewards", help="dot vs distance shaping on the first stage")
    r.add_argument("config")
    r.add_argument("--seeds", type=int, nargs="+", default=[0])
    r.add_argument("--progress", type=int, default=100)
    r.set_defaults(func=cmd_compare)

    s = sub.add_parser("scenario", help="write the layout of one training episode")
    s.add_argument("config")
    s.add_argument("--stage", required=True)
    s.add_argument("--episode", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenario)

    y = sub.add_parser("replay", help="fly one scenario greedily and export its trajectory")
    y.add_argument("scenario")
    y.add_argument("checkpoint")
    y.add_argument("--out", default="trajectory.csv")
    y.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, CliError, FileNotFoundError, ValueError) as exc:
        print(f"airspace-ddpg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
