import json

import pytest

from pidgm.config import (
    APPENDIX_B_BASE,
    ConfigError,
    ExperimentConfig,
    dump_config,
    parse_config,
    parse_sweep_config,
)


def _write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_file_gives_noisy_run_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, ""))
    t = cfg.train
    assert (t.lam, t.beta, t.learning_rate, t.steps) == (1.5, 1.0, 1e-4, 30000)
    assert (t.k_g, t.k_d) == (5, 1)
    assert cfg.data.n_u == 200 and cfg.data.n_collocation == 10000 and cfg.data.noisy
    assert cfg.model.gen_layers == 4 and cfg.model.gen_width == 50


def test_appendix_b1_config(tmp_path):
    cfg = parse_config(_write(tmp_path, "data: {noisy: false, n_u: 150, n_r: 10000}\nmodel: {disc_layers: 3}\n"))
    assert cfg.data.n_initial == 50 and cfg.data.n_boundary_per_side == 50
    assert not cfg.data.noisy and cfg.model.disc_layers == 3


def test_k_d_zero_names_the_key(tmp_path):
    with pytest.raises(ConfigError, match=r"train\.k_d"):
        parse_config(_write(tmp_path, "train: {k_d: 0}\n"))


def test_unknown_key_rejected_with_path(tmp_path):
    with pytest.raises(ConfigError, match=r"train\.lamda: unknown key"):
        parse_config(_write(tmp_path, "train: {lamda: 2}\n"))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="no such"):
        parse_config(tmp_path / "nope.json")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config(_write(tmp_path, "{bad json", "c.json"))
    with pytest.raises(ConfigError, match="mapping"):
        parse_config(_write(tmp_path, "- 1\n- 2\n"))


def test_n_u_conflict(tmp_path):
    with pytest.raises(ConfigError, match="either n_u"):
        parse_config(_write(tmp_path, "data: {n_u: 150, n_initial: 50}\n"))


def test_json_and_yaml_agree(tmp_path):
    a = parse_config(_write(tmp_path, json.dumps({"seed": 3, "train": {"beta": 2.0}}), "c.json"))
    b = parse_config(_write(tmp_path, "seed: 3\ntrain:\n  beta: 2.0\n"))
    assert a == b


def test_resolved_echo_round_trips(tmp_path):
    cfg = parse_config(_write(tmp_path, "seed: 9\ndata: {n_u: 60, n_r: 10}\n"))
    echo = _write(tmp_path, dump_config(cfg), "echo.json")
    assert parse_config(echo) == cfg


def test_train_config_bridge():
    tc = ExperimentConfig(seed=4).train_config()
    assert tc.seed == 4 and tc.generator_spec.hidden_width == 50
    assert ExperimentConfig().train_config(seed=11).seed == 11


def test_sweep_studies(tmp_path):
    s = parse_sweep_config(_write(tmp_path, "study: seeds15\n"))
    assert s.axes == {"seed": list(range(15))}
    assert not s.base.data.noisy and s.base.data.n_u == 150
    assert s.base.model.disc_layers == APPENDIX_B_BASE["model"]["disc_layers"]
    nu_nr = parse_sweep_config(_write(tmp_path, "study: nu_nr\n"))
    assert len(nu_nr.axes["n_u"]) * len(nu_nr.axes["n_r"]) == 21
    arch = parse_sweep_config(_write(tmp_path, "study: arch\n"))
    assert arch.axes == {"depth": [2, 3, 4], "width": [20, 50, 100]}
    kgkd = parse_sweep_config(_write(tmp_path, "study: kgkd\n"))
    assert kgkd.axes == {"k_g": [1, 2, 5], "k_d": [1, 2, 5]}


def test_sweep_base_override_keeps_appendix_defaults(tmp_path):
    s = parse_sweep_config(_write(tmp_path, "axes: {n_r: [10]}\nbase: {data: {n_u: 60}}\n"))
    assert s.base.data.n_u == 60 and s.base.data.n_collocation == 10000 and not s.base.data.noisy


def test_sweep_validation(tmp_path):
    with pytest.raises(ConfigError, match="study or at least one axis"):
        parse_sweep_config(_write(tmp_path, "{}\n"))
    with pytest.raises(ConfigError, match="unknown sweep axis"):
        parse_sweep_config(_write(tmp_path, "axes: {lr: [1]}\n"))
    with pytest.raises(ConfigError, match="not both"):
        parse_sweep_config(_write(tmp_path, "study: arch\naxes: {k_g: [1]}\n"))
    with pytest.raises(ConfigError, match="study"):
        parse_sweep_config(_write(tmp_path, "study: table9\n"))


def test_encoder_sigma_bounds(tmp_path):
    tc = parse_config(_write(tmp_path, "train: {log_sigma_min: -2.5}\n")).train_config()
    assert (tc.log_sigma_min, tc.log_sigma_max) == (-2.5, 10.0)
    assert ExperimentConfig().train_config().log_sigma_min == 0.0
    with pytest.raises(ConfigError, match="log_sigma_min"):
        parse_config(_write(tmp_path, "train: {log_sigma_min: 3, log_sigma_max: 2}\n"))
