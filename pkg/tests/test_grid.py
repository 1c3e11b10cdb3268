import numpy as np
import pytest

from impulsegame import kernels
from impulsegame.grid import Grid, TimeMesh, ValueField, interp, node_state, time_slice


@pytest.fixture
def line_grid():
    return Grid([-6.0], [6.0], [241])


def test_node_state(line_grid):
    assert node_state(line_grid, 120)[0] == 0.0
    assert node_state(line_grid, 0)[0] == -6.0
    assert node_state(line_grid, 240)[0] == 6.0
    with pytest.raises(IndexError):
        node_state(line_grid, 241)
    with pytest.raises(IndexError):
        node_state(line_grid, -1)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid([0.0], [0.0], [5])
    with pytest.raises(ValueError):
        Grid([0.0], [1.0], [1])
    with pytest.raises(ValueError):
        Grid([0.0, 0.0], [1.0], [5, 5])


def test_spacing(line_grid):
    assert line_grid.step[0] == pytest.approx(0.05)
    g2 = Grid([0.0, -1.0], [1.0, 1.0], [11, 21])
    assert np.allclose(g2.step, [0.1, 0.1])
    assert g2.n_nodes == 11 * 21
    assert g2.strides.tolist() == [21, 1]


def test_interp_reproduces_node_coordinates(line_grid):
    values = line_grid.nodes[:, 0]
    assert interp(values, line_grid, [0.37]) == pytest.approx(0.37, abs=1e-14)
    # node query reproduces the node value to interpolation precision
    for i in (0, 121, 240):
        got = interp(values, line_grid, line_grid.nodes[i])
        assert abs(got - values[i]) <= 8 * np.spacing(max(abs(values[i]), 1.0))


def test_interp_clamps(line_grid):
    values = line_grid.nodes[:, 0] ** 2
    assert interp(values, line_grid, [100.0]) == interp(values, line_grid, [6.0])
    assert interp(values, line_grid, [-100.0]) == interp(values, line_grid, [-6.0])


def test_affine_reproduction_within_8_ulps():
    rng = np.random.default_rng(42)
    grid = Grid([-2.0, 1.0], [3.0, 4.0], [41, 31])
    a = rng.normal(size=2)
    b = rng.normal()
    values = grid.nodes @ a + b
    queries = rng.uniform([-2.0, 1.0], [3.0, 4.0], size=(500, 2))
    got = grid.interp_many(values, queries)
    want = queries @ a + b
    slack = 8 * np.spacing(np.maximum(np.abs(want), 1.0))
    assert np.all(np.abs(got - want) <= slack)


def test_interp_monotone_in_node_values():
    rng = np.random.default_rng(7)
    grid = Grid([0.0], [1.0], [11])
    base = rng.normal(size=11)
    queries = rng.uniform(0, 1, size=(200, 1))
    v0 = grid.interp_many(base, queries)
    for i in range(11):
        raised = base.copy()
        raised[i] += 0.5
        v1 = grid.interp_many(raised, queries)
        assert np.all(v1 >= v0)


def test_clamp_idempotent(line_grid):
    rng = np.random.default_rng(3)
    values = rng.normal(size=241)
    wild = rng.uniform(-20, 20, size=(100, 1))
    clamped = np.clip(wild, -6.0, 6.0)
    a = line_grid.interp_many(values, wild)
    b = line_grid.interp_many(values, clamped)
    assert np.array_equal(a, b)


def test_time_mesh():
    mesh = TimeMesh(0.0, 1.0, 100)
    assert mesh.dt == pytest.approx(0.01)
    assert mesh.time(0) == 0.0
    assert mesh.time(100) == 1.0  # exact at the endpoint
    with pytest.raises(IndexError):
        mesh.time(101)
    with pytest.raises(ValueError):
        TimeMesh(1.0, 1.0, 10)
    with pytest.raises(ValueError):
        TimeMesh(0.0, 1.0, 0)


def test_value_field_slices():
    grid = Grid([0.0], [1.0], [5])
    mesh = TimeMesh(0.0, 1.0, 4)
    fv = ValueField(grid, mesh)
    fv.values[4] = 1.0
    assert np.all(time_slice(fv, 4) == 1.0)
    assert np.all(time_slice(fv, 0) == 0.0)
    with pytest.raises(IndexError):
        time_slice(fv, 5)
    with pytest.raises(ValueError):
        ValueField(grid, mesh, np.zeros((3, 5)))


def test_backends_bit_identical():
    """The numba fast path and the numpy fallback must agree bitwise."""
    rng = np.random.default_rng(11)
    grid = Grid([-1.0, 0.0], [2.0, 5.0], [13, 9])
    values = rng.normal(size=grid.n_nodes)
    pts = rng.uniform([-1.5, -1.0], [2.5, 6.0], size=(400, 2))
    fast = kernels.interp_batch(
        values, grid.lo, grid.hi, grid.inv_step, grid.counts, grid.strides, pts
    )
    slow = kernels._interp_batch_numpy(
        values, grid.lo, grid.hi, grid.inv_step, grid.counts, grid.strides, pts
    )
    assert np.array_equal(fast, slow)


def test_backend_env_flag_reported():
    assert kernels.active_backend() in ("numba", "numpy")
    assert kernels.set_threads(1) == 1
