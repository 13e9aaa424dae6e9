"""Experiment-config parsing, template, and validation."""

from __future__ import annotations

import pytest

from fredlab.config import ExperimentConfig, config_template, load_config, parse_config
from fredlab.errors import ConfigError


def test_template_parses_back_to_defaults():
    cfg = parse_config(config_template())
    assert cfg.nx == 64 and cfg.ny == 65
    assert cfg.initial == "shear"
    assert cfg.operator_list() == ["omega_hat"]
    cfg.validate()


def test_parse_ignores_comments_and_blank_lines():
    text = """
    # a comment
    name = demo

    nx = 32  # trailing comment
    conjugate_scan = true
    """
    cfg = parse_config(text)
    assert cfg.name == "demo"
    assert cfg.nx == 32
    assert cfg.conjugate_scan is True


def test_unknown_key_reports_line_and_name():
    with pytest.raises(ConfigError, match=r"line 2: unknown config key 'nz'"):
        parse_config("name = a\nnz = 3\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("name = a\nname = b\n")


def test_missing_name_rejected():
    with pytest.raises(ConfigError, match="name"):
        parse_config("nx = 32\n")


def test_type_errors_point_at_key():
    with pytest.raises(ConfigError, match="nx"):
        parse_config("name = a\nnx = many\n")
    with pytest.raises(ConfigError, match="conjugate_scan"):
        parse_config("name = a\nconjugate_scan = maybe\n")


@pytest.mark.parametrize(
    "line",
    [
        "nx = 7",  # below the smallest supported resolution
        "ny = 5",
        "t_final = 0",
        "dt = 0.3",  # does not divide t_final
        "initial = vortex",
        "initial = file",  # file source needs initial_file
        "operators = lambda,unknown",
        "inequalities = boundary-x,bogus",
        "eps_policy = tiny",
        "eps_policy = fixed",  # fixed policy needs a positive eps
        "s_level = 0",
        "max_k = -1",
        "inequality_samples = 0",
    ],
)
def test_validation_rejects_bad_values(line):
    with pytest.raises(ConfigError):
        parse_config(f"name = a\n{line}\n")


def test_checkpoint_count_from_step():
    cfg = parse_config("name = a\nt_final = 1.0\ndt = 0.125\n")
    assert cfg.n_checkpoints() == 9


def test_lists_parse_and_strip():
    cfg = parse_config("name = a\noperators = lambda, gamma\ninequalities = coercivity\n")
    assert cfg.operator_list() == ["lambda", "gamma"]
    assert cfg.inequality_list() == ["coercivity"]


def test_to_dict_roundtrips_through_parse():
    cfg = parse_config("name = roundtrip\nnx = 32\nny = 33\nseed = 9\namplitude = 0.5\n")
    text = "\n".join(f"{k} = {v}" for k, v in cfg.to_dict().items())
    again = parse_config(text)
    assert again == cfg


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("name = filecase\nnx = 16\nny = 17\n")
    cfg = load_config(path)
    assert isinstance(cfg, ExperimentConfig)
    assert (cfg.name, cfg.nx, cfg.ny) == ("filecase", 16, 17)
