"""Shared fixtures: the stock scenario runs are expensive, so run each once."""
from pathlib import Path

import pytest

from geoshock.cli import simulate
from geoshock.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIOS


@pytest.fixture(scope="session")
def burgers_cfg():
    return load_scenario(SCENARIOS / "burgers_sine.cfg")


@pytest.fixture(scope="session")
def coupled_cfg():
    return load_scenario(SCENARIOS / "coupled_ripple.cfg")


@pytest.fixture(scope="session")
def burgers_run(burgers_cfg):
    """(system, profiles, trajectory, summary) of the stock plane-wave run."""
    return simulate(burgers_cfg)


@pytest.fixture(scope="session")
def coupled_run(coupled_cfg):
    return simulate(coupled_cfg)
