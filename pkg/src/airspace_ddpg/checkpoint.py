"""Agent checkpoint container.

Layout::

    b"ASCKPT"  u16 container version  u32 header length
    header     UTF-8 JSON (sorted keys): hyperparameters, observation
               settings, state/action widths, buffer statistics, free-form meta
    four network blocks (see ``nn.dump_mlp``): actor, critic,
    actor target, critic target

Buffer contents are not stored.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

from .ddpg import Agent, DdpgHyperparams
from .nn import CheckpointError, dump_mlp, parse_mlp
from .training import ObservationConfig

MAGIC = b"ASCKPT"
VERSION = 1


def _header(agent: Agent, obs_cfg: ObservationConfig, meta: dict | None) -> dict:
    return {
        "hyperparameters": agent.hyper.to_dict(),
        "observation": {"sensing_radius": obs_cfg.sensing_radius, "scale": obs_cfg.scale},
        "state_dim": agent.state_dim,
        "action_dim": agent.action_dim,
        "buffer": {"size": len(agent.buffer), "capacity": agent.buffer.capacity},
        "learn_steps": agent.learn_steps,
        "meta": meta or {},
    }


def dumps_checkpoint(agent: Agent, obs_cfg: ObservationConfig = ObservationConfig(),
                     meta: dict | None = None) -> bytes:
    header = json.dumps(_header(agent, obs_cfg, meta), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(header)), header]
    for net in (agent.actor, agent.critic, agent.actor_target, agent.critic_target):
        parts.append(dump_mlp(net))
    return b"".join(parts)


def save_checkpoint(agent: Agent, path, obs_cfg: ObservationConfig = ObservationConfig(),
                    meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_checkpoint(agent, obs_cfg, meta))
    return path


def loads_checkpoint(data: bytes) -> tuple[Agent, ObservationConfig, dict]:
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not an agent checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(data) < pos + 6:
        raise CheckpointError("truncated checkpoint header")
    version, n = struct.unpack_from("<HI", data, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    pos += 6
    if len(data) < pos + n:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[pos:pos + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    pos += n
    hp = dict(header["hyperparameters"])
    hp["hidden"] = tuple(hp["hidden"])
    hyper = DdpgHyperparams(**hp)
    sd, ad = header["state_dim"], header["action_dim"]
    actor_sizes = [sd, *hyper.hidden, ad]
    critic_sizes = [sd + ad, *hyper.hidden, 1]
    nets = []
    for sizes in (actor_sizes, critic_sizes, actor_sizes, critic_sizes):
        net, pos = parse_mlp(data, pos, expect_sizes=sizes)
        nets.append(net)
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after network blocks")
    agent = Agent(hyper, state_dim=sd, action_dim=ad, actor=nets[0], critic=nets[1])
    agent.actor_target, agent.critic_target = nets[2], nets[3]
    agent.learn_steps = header.get("learn_steps", 0)
    obs = ObservationConfig(**header["observation"])
    return agent, obs, header.get("meta", {})


def load_checkpoint(path) -> tuple[Agent, ObservationConfig, dict]:
    """Rebuild an agent (empty replay buffer, fresh optimiser state) from ``path``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads_checkpoint(path.read_bytes())


def transfer(source: Agent, hyper: DdpgHyperparams | None = None) -> Agent:
    """Fresh agent (empty buffer, new optimiser state) starting from ``source``'s networks.

    Raises CheckpointError when ``hyper`` asks for a different architecture.
    """
    hyper = source.hyper if hyper is None else hyper
    if tuple(hyper.hidden) != tuple(source.hyper.hidden):
        raise CheckpointError(f"checkpoint mismatch: networks have hidden layers "
                              f"{list(source.hyper.hidden)}, config expects {list(hyper.hidden)}")
    agent = Agent(hyper, state_dim=source.state_dim, action_dim=source.action_dim,
                  actor=source.actor.copy(), critic=source.critic.copy())
    agent.actor_target, agent.critic_target = source.actor_target.copy(), source.critic_target.copy()
    return agent
