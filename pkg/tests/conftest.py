import pathlib

import numpy as np
import pytest

from ainfell.algebras import heisenberg_algebra
from ainfell.config import RunConfig, TruncationPolicy
from ainfell.theta import Modulus

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="function")
def rng():
    """A fresh, seeded generator so every test sees the same random draws."""
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pol():
    return TruncationPolicy()


@pytest.fixture(scope="session")
def tau_i():
    return Modulus(tau=1j)


@pytest.fixture(scope="function")
def heisenberg():
    return heisenberg_algebra(1.5)


@pytest.fixture(scope="function")
def small_config(tmp_path):
    """Run configuration with grids small enough for the oracle tests.

    Spectral accuracy on the periodic integrands keeps N = 64 well inside the
    oracle tolerances for degrees up to 5.
    """
    return RunConfig(grid_n=64, modes_m=24, output=tmp_path / "record.json")


@pytest.fixture(scope="function")
def config_file(tmp_path, monkeypatch):
    """A config file with an environment placeholder, and the variable it names."""
    monkeypatch.setenv("AINFELL_TEST_EPS", "1e-13")
    source = (FIXTURES / "run_config.json").read_text()
    path = tmp_path / "run_config.json"
    path.write_text(source)
    return path


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: exhaustive seed sweeps; deselect with -m 'not slow'")
