import json

import pytest

from ainfell.config import RunConfig, load_run_config, substitute_placeholders
from ainfell.errors import ConfigError


@pytest.fixture(autouse=True)
def no_config_env(monkeypatch):
    monkeypatch.delenv("AINFELL_CONFIG", raising=False)


def test_defaults():
    config = load_run_config()
    assert config == RunConfig()
    assert config.truncation.eps == 1e-14
    assert config.tolerances.oracle == 1e-6
    assert config.gamma_convention == "plus"


def test_placeholders_are_read_from_the_environment(config_file):
    config = load_run_config(config_file)
    assert config.truncation.eps == 1e-13
    assert config.truncation.max_terms == 300
    assert config.grid_n == 64
    # untouched keys keep their defaults
    assert config.tolerances.theta == 1e-9


def test_missing_environment_variable(config_file, monkeypatch):
    monkeypatch.delenv("AINFELL_TEST_EPS")
    with pytest.raises(ConfigError):
        load_run_config(config_file)


def test_config_path_from_environment(config_file, monkeypatch):
    monkeypatch.setenv("AINFELL_CONFIG", str(config_file))
    assert load_run_config().seed == 7


def test_overrides_win_and_none_is_ignored(config_file):
    config = load_run_config(config_file, {"seed": 11, "grid_n": None, "tolerances": {"fit": 1e-6}})
    assert config.seed == 11
    assert config.grid_n == 64
    assert config.tolerances.fit == 1e-6
    assert config.tolerances.oracle == 1e-6


def test_grid_must_be_a_power_of_two(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"grid_n": 100}))
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")


def test_substitute_placeholders_walks_lists(monkeypatch):
    monkeypatch.setenv("AINFELL_TEST_NAME", "heisenberg")
    assert substitute_placeholders({"runs": ["<AINFELL_TEST_NAME>", "plain"]}) == {"runs": ["heisenberg", "plain"]}
