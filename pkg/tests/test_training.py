import math

import numpy as np
import pytest

from airspace_ddpg.airspace import MAX_ACCEL, EnvInstance, ScenarioConfig, Status, vec
from airspace_ddpg.checkpoint import dumps_checkpoint, loads_checkpoint
from airspace_ddpg.ddpg import Agent, DdpgHyperparams
from airspace_ddpg.rewards import RewardConfig
from airspace_ddpg.training import (EpisodeOutcome, StageSpec, TrainingMetrics, rolling_rates,
                                    run_episode, train_stage)

TINY = DdpgHyperparams(hidden=(8, 8), learn_start=20, batch_size=8, buffer_capacity=5000)


def straight_env(distance=500.0, **kw):
    return EnvInstance(origin=vec(1000, 2000), destination=vec(1000 + distance, 2000), bounds=4000,
                       **kw)


def full_ahead(s, u, env):
    return MAX_ACCEL * (env.destination - u.position) / np.linalg.norm(env.destination - u.position)


def test_bang_bang_arrival_step():
    # from rest under constant a: p_k = a k (k + 1) / 2 (semi-implicit Euler, dt = 1)
    need = 500.0 - 100.0
    k = math.ceil((-1 + math.sqrt(1 + 8 * need / MAX_ACCEL)) / 2)
    out = run_episode(None, straight_env(), 0.0, None, policy=full_ahead)
    assert out.status is Status.SUCCESS
    assert out.steps == k == 16


def test_zero_action_times_out_at_cap():
    out = run_episode(None, straight_env(), 0.0, None, policy=lambda s, u, e: np.zeros(2))
    assert out.status is Status.TIMEOUT and out.steps == 800


def test_exploration_hold_repeats_random_actions():
    hyper = DdpgHyperparams(hidden=(8, 8), explore_hold=5)
    agent = Agent(hyper, np.random.default_rng(0))
    env = straight_env(distance=3000.0, max_steps=23)
    out = run_episode(agent, env, 1.0, np.random.default_rng(1), record=True)
    acts = np.array([r.acceleration for r in out.trajectory])
    assert len(acts) == 23
    for start in range(0, 23, 5):
        block = acts[start:start + 5]
        assert np.all(block == block[0])
    assert not np.array_equal(acts[0], acts[5])
    with pytest.raises(ValueError):
        DdpgHyperparams(explore_hold=0)


def test_episode_reproducible_without_learning():
    agent = Agent(TINY, np.random.default_rng(0))
    runs = [run_episode(agent, straight_env(3000), 0.5, np.random.default_rng(7), record=True)
            for _ in range(2)]
    assert runs[0].status is runs[1].status
    assert runs[0].cumulative_reward == runs[1].cumulative_reward
    assert all(np.array_equal(a.position, b.position)
               for a, b in zip(runs[0].trajectory, runs[1].trajectory))


def test_learning_requires_rng():
    agent = Agent(TINY, np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_episode(agent, straight_env(), 0.1, np.random.default_rng(0), learn=True)


def test_transitions_stored_and_terminal_flags():
    agent = Agent(TINY, np.random.default_rng(0))
    out = run_episode(agent, straight_env(), 0.0, None, store=True,
                      policy=full_ahead)
    assert len(agent.buffer) == out.steps
    done = [t.terminal for t in agent.buffer.transitions()]
    assert done == [False] * (out.steps - 1) + [True]


def test_timeout_transition_not_terminal():
    agent = Agent(TINY, np.random.default_rng(0))
    env = straight_env(max_steps=5)
    out = run_episode(agent, env, 0.0, None, store=True, policy=lambda s, u, e: np.zeros(2))
    assert out.status is Status.TIMEOUT
    assert not any(t.terminal for t in agent.buffer.transitions())


def test_rolling_rates_example():
    r = rolling_rates(["success", "success", "collision", "success"], window=4)
    assert r[Status.SUCCESS][-1] == 0.75 and r[Status.COLLISION][-1] == 0.25


def test_rolling_rates_partial_windows_and_constant():
    r = rolling_rates(["success"] * 7, window=3)
    assert np.all(r[Status.SUCCESS] == 1.0)
    r = rolling_rates(["exit", "success", "success"], window=2)
    np.testing.assert_array_equal(r[Status.EXITED], [1.0, 0.5, 0.0])


def test_rolling_rates_partition():
    rng = np.random.default_rng(0)
    names = [s.value for s in (Status.SUCCESS, Status.COLLISION, Status.PPZ, Status.EXITED,
                               Status.TIMEOUT)]
    stream = rng.choice(names, size=500)
    rates = rolling_rates(stream, window=37)
    np.testing.assert_allclose(sum(rates.values()), 1.0, atol=1e-9)


def test_rolling_rates_rejects_bad_window():
    with pytest.raises(ValueError):
        rolling_rates([], window=0)


def test_stage_with_one_episode():
    spec = StageSpec("one", ScenarioConfig(bounds=4000, max_steps=50), 1)
    _, m = train_stage(spec, None, TINY, master_seed=0)
    assert len(m.outcomes) == 1 and len(m.rows()) == 1


def test_stage_rejects_zero_episodes():
    with pytest.raises(ValueError):
        StageSpec("none", ScenarioConfig(), 0)


def test_training_metrics_csv_deterministic(tmp_path):
    spec = StageSpec("s", ScenarioConfig(bounds=4000, n_static=2, n_ppz=1, max_steps=60), 6)
    paths = []
    for k in range(2):
        _, m = train_stage(spec, None, TINY, master_seed=11)
        paths.append(m.write_csv(tmp_path / f"m{k}.csv"))
    assert paths[0].read_bytes() == paths[1].read_bytes()
    header = paths[0].read_text().splitlines()[0]
    assert header == ("episode,outcome,steps,cumulative_reward,rolling_success,rolling_collision,"
                      "rolling_ppz,rolling_exit,epsilon")


def test_different_seeds_differ():
    spec = StageSpec("s", ScenarioConfig(bounds=4000, max_steps=40), 3)
    a = train_stage(spec, None, TINY, master_seed=1)[1]
    b = train_stage(spec, None, TINY, master_seed=2)[1]
    assert [o.cumulative_reward for o in a.outcomes] != [o.cumulative_reward for o in b.outcomes]


def test_transfer_starts_from_previous_parameters():
    spec = StageSpec("s", ScenarioConfig(bounds=4000, max_steps=40), 3)
    agent, _ = train_stage(spec, None, TINY, master_seed=0)
    restored, _, _ = loads_checkpoint(dumps_checkpoint(agent))
    assert np.array_equal(restored.actor.flat, agent.actor.flat)
    assert np.array_equal(restored.critic_target.flat, agent.critic_target.flat)


def test_metrics_rows_record_epsilon_schedule():
    m = TrainingMetrics([EpisodeOutcome(Status.SUCCESS, 3, 1.0, epsilon=0.5)])
    row = m.rows()[0]
    assert row["outcome"] == "success" and float(row["epsilon"]) == 0.5


def test_reward_mode_changes_cumulative_reward():
    env = straight_env(3000)
    a = run_episode(None, env, 0.0, None, policy=full_ahead)
    b = run_episode(None, env, 0.0, None, policy=full_ahead, reward_cfg=RewardConfig(mode="distance"))
    assert a.steps == b.steps and a.cumulative_reward != b.cumulative_reward
