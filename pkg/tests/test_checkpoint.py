import json
import struct

import numpy as np
import pytest

from airspace_ddpg.checkpoint import (MAGIC, dumps_checkpoint, load_checkpoint, loads_checkpoint,
                                      save_checkpoint)
from airspace_ddpg.ddpg import Agent, DdpgHyperparams
from airspace_ddpg.nn import CheckpointError, forward
from airspace_ddpg.training import ObservationConfig


def agent(seed=0, hidden=(8, 6)):
    return Agent(DdpgHyperparams(hidden=hidden, lr_actor=1e-3), np.random.default_rng(seed))


def edit_header(data: bytes, fn) -> bytes:
    pos = len(MAGIC)
    version, n = struct.unpack_from("<HI", data, pos)
    header = json.loads(data[pos + 6:pos + 6 + n])
    fn(header)
    raw = json.dumps(header, sort_keys=True).encode()
    return data[:pos] + struct.pack("<HI", version, len(raw)) + raw + data[pos + 6 + n:]


def test_save_load_save_identical(tmp_path):
    a = agent()
    a.actor_target.flat += 0.25  # targets are stored separately
    p1 = save_checkpoint(a, tmp_path / "a.ckpt", ObservationConfig(scale=5000.0), {"stage": "s0"})
    b, obs, meta = load_checkpoint(p1)
    p2 = save_checkpoint(b, tmp_path / "b.ckpt", obs, meta)
    assert p1.read_bytes() == p2.read_bytes()
    assert obs.scale == 5000.0 and meta == {"stage": "s0"}
    assert b.hyper == a.hyper
    for x, y in ((a.actor, b.actor), (a.critic, b.critic), (a.actor_target, b.actor_target),
                 (a.critic_target, b.critic_target)):
        assert np.array_equal(x.flat, y.flat)


def test_loaded_actor_reproduces_outputs():
    a = agent(3)
    b, _, _ = loads_checkpoint(dumps_checkpoint(a))
    states = np.random.default_rng(1).normal(size=(100, 8))
    np.testing.assert_allclose(forward(b.actor, states)[0], forward(a.actor, states)[0],
                               rtol=0, atol=1e-12)


def test_edited_hidden_sizes_is_shape_mismatch():
    data = edit_header(dumps_checkpoint(agent()), lambda h: h["hyperparameters"].update(hidden=[8, 7]))
    with pytest.raises(CheckpointError, match="shape mismatch"):
        loads_checkpoint(data)


def test_version_mismatch():
    data = bytearray(dumps_checkpoint(agent()))
    struct.pack_into("<H", data, len(MAGIC), 99)
    with pytest.raises(CheckpointError, match="version"):
        loads_checkpoint(bytes(data))


@pytest.mark.parametrize("cut", [3, 10, 200, -1])
def test_truncated(cut):
    data = dumps_checkpoint(agent())
    with pytest.raises(CheckpointError, match="truncated|magic"):
        loads_checkpoint(data[:cut])


def test_trailing_garbage_rejected():
    with pytest.raises(CheckpointError, match="trailing"):
        loads_checkpoint(dumps_checkpoint(agent()) + b"\0")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.ckpt")
