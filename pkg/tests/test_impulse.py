import math

import numpy as np
import pytest

from impulsegame.grid import Grid, interp
from impulsegame.impulse import best_jump, best_jump_grid, best_jump_scaled, terminal_values
from impulsegame.problem import builtin, load_problem

from conftest import node_at

FROZEN = """\
[meta]
m = 1
t0 = 0.0
T = 1.0

[controls]
k1 = 0

[impulses]
e1 = 1

[dynamics]
f1 = 0

[jumps]
g1 = 0

[costs]
psi = 0
impulse_cost = 0.3
terminal = abs(x1)
"""


@pytest.fixture(scope="module")
def line_grid():
    return Grid([-6.0], [6.0], [241])


def test_zero_jump_map_adds_cost(line_grid):
    spec = load_problem(FROZEN)
    values = np.full(line_grid.n_nodes, 5.0)
    res = best_jump(values, line_grid, spec, 0.0, [1.25])
    assert res.value == pytest.approx(5.3)
    assert res.best_xi.tolist() == [1.0]


def test_dg1_single_impulse(line_grid):
    spec = builtin("dg1")
    values = np.abs(line_grid.nodes[:, 0])
    res = best_jump(values, line_grid, spec, 0.0, [3.0])
    assert res.value == pytest.approx(1.1)
    assert res.best_xi.tolist() == [-2.0]


def test_dg1_rich_enumeration(line_grid):
    spec = builtin("dg1-rich")
    values = np.abs(line_grid.nodes[:, 0])
    res = best_jump(values, line_grid, spec, 0.0, [3.0])
    # independent enumeration over the impulse set with the same arithmetic
    expected = min(
        interp(values, line_grid, [3.0 + xi]) + 0.1 for xi in (-2.0, -1.0, 1.0, 2.0)
    )
    assert res.value == expected
    assert res.value == pytest.approx(1.1)
    assert res.best_xi.tolist() == [-2.0]


def test_grid_batch_matches_independent_loop(line_grid):
    spec = builtin("dg1-rich")
    rng = np.random.default_rng(5)
    values = rng.normal(size=line_grid.n_nodes)
    batch, idx = best_jump_grid(values, line_grid, spec, 0.5)
    for i in range(0, line_grid.n_nodes, 17):
        x = line_grid.nodes[i]
        cands = [
            interp(values, line_grid, x + xi) + 0.1 for xi in spec.impulses[:, 0]
        ]
        assert batch[i] == min(cands)
        assert idx[i] == int(np.argmin(cands))


def test_first_impulse_wins_ties(line_grid):
    # two impulses with identical effect: the first in declared order wins
    text = FROZEN.replace("e1 = 1", "e1 = 1\ne2 = 1")
    spec = load_problem(text)
    values = np.zeros(line_grid.n_nodes)
    res = best_jump(values, line_grid, spec, 0.0, [0.0])
    assert res.xi_index == 0


def test_monotone_in_slice(line_grid):
    spec = builtin("dg1-rich")
    rng = np.random.default_rng(13)
    low = rng.normal(size=line_grid.n_nodes)
    high = low + rng.uniform(0, 1, size=line_grid.n_nodes)
    vlow, _ = best_jump_grid(low, line_grid, spec, 0.0)
    vhigh, _ = best_jump_grid(high, line_grid, spec, 0.0)
    assert np.all(vlow <= vhigh)


def test_scaled_matches_plain_at_t0(line_grid):
    spec = builtin("dg1")
    values = np.abs(line_grid.nodes[:, 0])
    for x in (-3.0, 0.4, 5.0):
        a = best_jump(values, line_grid, spec, 0.0, [x])
        b = best_jump_scaled(values, line_grid, spec, 0.0, [x])
        assert a.value == b.value  # exp(0) = 1 exactly


def test_scaled_cost_factor(line_grid):
    spec = builtin("dg1")
    values = np.abs(line_grid.nodes[:, 0])
    res = best_jump_scaled(values, line_grid, spec, 1.0, [3.0])
    assert res.value == pytest.approx(1.0 + math.e * 0.1)


def test_scaled_zero_jump_adds_scaled_cost(line_grid):
    spec = load_problem(FROZEN)
    values = np.full(line_grid.n_nodes, 2.0)
    res = best_jump_scaled(values, line_grid, spec, 0.7, [0.0])
    assert res.value == pytest.approx(2.0 + math.exp(0.7) * 0.3)


def test_terminal_values_dg1(line_grid):
    spec = builtin("dg1")
    g1 = terminal_values(line_grid, spec)
    assert g1[node_at(line_grid, 3.0)] == pytest.approx(1.1)   # one jump: |3-2| + 0.1
    assert g1[node_at(line_grid, 0.0)] == pytest.approx(0.0)   # jumping only costs
    assert g1[node_at(line_grid, 2.0)] == pytest.approx(0.1)
    # chains of jumps at the horizon: two for x=4, three for x=6
    assert g1[node_at(line_grid, 4.0)] == pytest.approx(0.2)
    assert g1[node_at(line_grid, 6.0)] == pytest.approx(0.3)


def test_terminal_values_below_terminal_cost(line_grid):
    for name in ("dg1", "dg1-rich"):
        spec = builtin(name)
        g = spec.terminal_cost(line_grid.nodes)
        g1 = terminal_values(line_grid, spec)
        assert np.all(g1 <= g + 1e-12)
        # equality where no jump is profitable
        i0 = node_at(line_grid, 0.0)
        assert g1[i0] == g[i0]


def test_huge_cost_means_no_jump(line_grid):
    text = FROZEN.replace("impulse_cost = 0.3", "impulse_cost = 1000")
    spec = load_problem(text)
    g = spec.terminal_cost(line_grid.nodes)
    g1 = terminal_values(line_grid, spec)
    assert np.array_equal(g1, g)


def test_terminal_obstacle_consistency(line_grid):
    """The closed terminal slice satisfies the jump obstacle inequality."""
    for name in ("dg1", "dg1-rich", "txcost"):
        spec = builtin(name)
        grid = line_grid if name != "txcost" else Grid([-2.0], [4.0], [241])
        g1 = terminal_values(grid, spec)
        obstacle, _ = best_jump_grid(g1, grid, spec, spec.horizon)
        assert float(np.max(g1 - obstacle)) <= 1e-10
