import json

import pytest
from typer.testing import CliRunner

from ainfell.cli import app

runner = CliRunner()

THETA_AT_I = 1.0864348112133080


@pytest.fixture(autouse=True)
def no_config_env(monkeypatch):
    monkeypatch.delenv("AINFELL_CONFIG", raising=False)


def test_theta_command():
    result = runner.invoke(app, ["theta", "--x", "0,0", "--tau", "0,1"])
    assert result.exit_code == 0
    record = json.loads(result.stdout)
    assert abs(record["value"][0] - THETA_AT_I) < 1e-12
    assert abs(record["value"][1]) < 1e-12
    assert record["terms_used"] > 0


def test_theta_extended_precision():
    result = runner.invoke(app, ["--precision", "extended", "theta", "--x", "0,0", "--tau", "0,1", "--char", "1/2"])
    assert result.exit_code == 0
    record = json.loads(result.stdout)
    assert abs(record["value"][0] - THETA_AT_I * 2 ** -0.25) < 1e-12
    assert record["terms_used"] is None


def test_bad_modulus_exits_2():
    result = runner.invoke(app, ["theta", "--x", "0,0", "--tau", "0,-1"])
    assert result.exit_code == 2


def test_unparsable_complex_exits_2():
    result = runner.invoke(app, ["theta", "--x", "zero", "--tau", "0,1"])
    assert result.exit_code == 2


def test_m3_holomorphic_writes_output(tmp_path):
    out = tmp_path / "m3.json"
    result = runner.invoke(
        app, ["--output", str(out), "m3", "--k", "1", "--l", "1", "--u", "0.37,0.21", "--v", "0.11,-0.05"]
    )
    assert result.exit_code == 0
    record = json.loads(out.read_text())
    assert record["G"] is not None
    assert record["F"] is None
    assert record["query"]["k"] == 1


def test_m3_on_the_lattice_exits_3():
    result = runner.invoke(app, ["m3", "--side", "fukaya", "--k", "1", "--l", "1", "--u", "1,1", "--v", "0.1,0.1"])
    assert result.exit_code == 3


def test_m3_not_transversal_exits_4():
    # w2 = 0 with d = a = 0 is exact; a hair off it is refused
    result = runner.invoke(
        app, ["m3", "--side", "fukaya", "--k", "1", "--l", "1", "--u", "0.3,0.2", "--v", "0.1,-0.19999999999"]
    )
    assert result.exit_code == 4


def test_unknown_suite_exits_2():
    result = runner.invoke(app, ["verify", "--suite", "nosuch"])
    assert result.exit_code == 2


def test_verify_ainf_suite():
    result = runner.invoke(app, ["verify", "--suite", "ainf", "--seed", "3"])
    assert result.exit_code == 0
    report = json.loads(result.stdout)
    assert report["suite"] == "ainf"
    assert report["seed"] == 3
    assert all(check["passed"] for check in report["checks"])


def test_impossible_tolerance_fails_verify():
    result = runner.invoke(app, ["verify", "--suite", "ainf", "--tol", "1e-300"])
    assert result.exit_code == 1


def test_underdetermined_fit_exits_5():
    result = runner.invoke(app, ["fit-homotopy", "--k", "2", "--l", "1", "--w", "0.3,0.2", "--samples", "1"])
    assert result.exit_code == 5


def test_config_file_from_environment(config_file, monkeypatch):
    monkeypatch.setenv("AINFELL_CONFIG", str(config_file))
    result = runner.invoke(app, ["theta", "--x", "0.1,0.1", "--tau", "0,1"])
    assert result.exit_code == 0


def test_m3_with_fit_records_the_homotopy():
    result = runner.invoke(
        app, ["m3", "--side", "fukaya", "--k", "1", "--l", "1", "--u", "0.37,0.21", "--v", "0.11,-0.05", "--fit"]
    )
    assert result.exit_code == 0
    record = json.loads(result.stdout)
    assert record["F"] is not None
    assert record["fit"]["residual"] < 1e-8
    assert [q for q, _, _ in record["fit"]["coeffs"]] == [0, 1]
