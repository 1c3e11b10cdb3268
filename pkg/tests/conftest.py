import numpy as np
import pytest

from impulsegame.grid import Grid, TimeMesh
from impulsegame.problem import builtin
from impulsegame.solver import solve_no_jump, solve_qvi, solve_stopping_iterates

DEFAULTS = {
    "dg1": ((-6.0, 6.0), 241),
    "dg1-rich": ((-6.0, 6.0), 241),
    "txcost": ((-2.0, 4.0), 241),
}


def default_setup(name):
    (lo, hi), n = DEFAULTS[name]
    spec = builtin(name)
    grid = Grid([lo], [hi], [n])
    mesh = TimeMesh(spec.t0, spec.horizon, 100)
    return spec, grid, mesh


def node_at(grid, x):
    idx = int(round((x - grid.lo[0]) / grid.step[0]))
    assert abs(grid.nodes[idx, 0] - x) < 1e-9
    return idx


@pytest.fixture(scope="session")
def dg1():
    return default_setup("dg1")


@pytest.fixture(scope="session")
def dg1_solved(dg1):
    spec, grid, mesh = dg1
    fieldv, report = solve_qvi(spec, grid, mesh)
    return spec, grid, mesh, fieldv, report


@pytest.fixture(scope="session")
def dg1_q0(dg1):
    spec, grid, mesh = dg1
    return solve_no_jump(spec, grid, mesh)


@pytest.fixture(scope="session")
def dg1_iterates(dg1):
    spec, grid, mesh = dg1
    return solve_stopping_iterates(spec, grid, mesh)


@pytest.fixture(scope="session")
def all_solved():
    out = {}
    for name in DEFAULTS:
        spec, grid, mesh = default_setup(name)
        fieldv, report = solve_qvi(spec, grid, mesh)
        out[name] = (spec, grid, mesh, fieldv, report)
    return out
