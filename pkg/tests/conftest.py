import functools

import pytest

from pqbound.scenarios import load_scenario
from pqbound.solver import interpolate, solve, SolveOptions


@functools.lru_cache(maxsize=None)
def _solved(name):
    pb = load_scenario(name).with_norms()
    u0 = interpolate(pb.boundary, pb.make_grid())
    return pb, solve(pb, u0, SolveOptions.from_config(pb.solver))


@pytest.fixture(scope="session")
def solved():
    """``solved(name) -> (problem with norms, DiscreteFunction)``, cached per session."""
    return _solved
