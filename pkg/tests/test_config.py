import json

import pytest

from airspace_ddpg.config import (ENV_OUTPUT_DIR, ENV_SEED, ConfigFileError, ConfigRangeError,
                                  ConfigSyntaxError, RunManifest, UnknownKeyError, parse_config,
                                  parse_config_text)

NO_ENV = {}


def parse(text, **kw):
    return parse_config_text(text, env=NO_ENV, **kw)


def test_empty_file_gives_desk_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    cfg = parse_config(path, env=NO_ENV)
    assert cfg.profile == "desk"
    assert cfg.hyper.hidden == (64, 64)
    assert cfg.stages[0].scenario.bounds == 4000 and cfg.stages[0].scenario.max_steps == 300
    assert cfg.stages[0].episodes == 1500 and cfg.stages[0].reward.mode == "dot"


def test_paper_profile_values():
    cfg = parse("profile: paper")
    h = cfg.hyper
    assert (h.discount, h.tau, h.buffer_capacity, h.lr_critic, h.lr_actor) == (
        0.9, 1.0, 10_000_000, 5e-4, 5e-5)
    assert h.hidden == (300, 400)
    assert cfg.scenario.max_steps == 800 and cfg.scenario.dt == 1.0
    assert cfg.scenario.bounds == 10_000


def test_out_of_range_names_key():
    with pytest.raises(ConfigRangeError, match="discount") as e:
        parse("hyperparameters: {discount: 1.5}")
    assert e.value.key == "hyperparameters.discount"


def test_unknown_key_rejected():
    with pytest.raises(UnknownKeyError, match="discont"):
        parse("hyperparameters: {discont: 0.5}")
    with pytest.raises(UnknownKeyError, match="stages\\[0\\].epsiodes"):
        parse("stages: [{name: a, epsiodes: 3}]")


def test_malformed_yaml():
    with pytest.raises(ConfigSyntaxError):
        parse("hyperparameters: [unclosed")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigFileError):
        parse_config(tmp_path / "nope.yaml")


def test_round_trip_fixed_point():
    for text in ("", "profile: paper", "profile: custom\nmaster_seed: 9",
                 "stages: [{name: a, episodes: 5, reward: {mode: distance}}]"):
        cfg = parse(text)
        again = parse(cfg.dumps())
        assert again == cfg
        assert again.dumps() == cfg.dumps()


def test_stage_inherits_and_overrides():
    cfg = parse("scenario: {bounds: 5000}\n"
                "stages: [{name: a, episodes: 2}, {name: b, episodes: 3, scenario: {n_ppz: 1}}]")
    a, b = cfg.stages
    assert a.scenario.bounds == b.scenario.bounds == 5000
    assert b.scenario.n_ppz == 1 and b.init == "previous" and a.init == "random"


def test_stage_init_path_must_exist(tmp_path):
    with pytest.raises(ConfigFileError, match="init"):
        parse("stages: [{name: a, init: missing.ckpt}]", base_dir=tmp_path)
    (tmp_path / "x.ckpt").write_bytes(b"")
    cfg = parse("stages: [{name: a, init: x.ckpt}]", base_dir=tmp_path)
    assert cfg.stages[0].init == str(tmp_path / "x.ckpt")


def test_first_stage_cannot_transfer():
    with pytest.raises(ConfigRangeError):
        parse("stages: [{name: a, init: previous}]")


def test_env_overrides():
    cfg = parse_config_text("", env={ENV_OUTPUT_DIR: "/tmp/elsewhere", ENV_SEED: "42"})
    assert str(cfg.output_dir) == "/tmp/elsewhere" and cfg.master_seed == 42
    with pytest.raises(ConfigRangeError):
        parse_config_text("", env={ENV_SEED: "forty"})


def test_capacity_list_validated():
    with pytest.raises(ConfigRangeError, match="n_list"):
        parse("evaluation: {capacity: {n_list: [0]}}")
    with pytest.raises(ConfigRangeError, match="n_list"):
        parse("evaluation: {capacity: {n_list: [400]}}")


def test_scenario_range_errors_name_key():
    with pytest.raises(ConfigRangeError, match="scenario.max_steps"):
        parse("scenario: {max_steps: 0}")
    with pytest.raises(ConfigRangeError, match="reward.mode"):
        parse("reward: {mode: potential}")


def test_manifest_requires_existing_paths(tmp_path):
    m = RunManifest(config={"a": 1})
    m.metrics["s"] = str(tmp_path / "missing.csv")
    with pytest.raises(FileNotFoundError):
        m.finalize(tmp_path / "manifest.json")
    (tmp_path / "missing.csv").write_text("x")
    path = m.finalize(tmp_path / "manifest.json")
    data = json.loads(path.read_text())
    assert data["config"] == {"a": 1} and data["finished"] and data["artifact_version"]
