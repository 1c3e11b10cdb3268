import numpy as np
import pytest

from impulsegame.cli import main
from impulsegame.grid import Grid, TimeMesh
from impulsegame.impulse import best_jump_grid, terminal_values
from impulsegame.problem import load_problem
from impulsegame.solver import solve_qvi, solve_no_jump, solve_stopping_iterates

PLANE = """\
[meta]
m = 2
t0 = 0.0
T = 0.5

[controls]
k1 = -1 -1
k2 = -1 1
k3 = 1 -1
k4 = 1 1

[impulses]
e1 = -1 -1

[dynamics]
f1 = tau1
f2 = tau2

[jumps]
g1 = xi1
g2 = xi2

[costs]
psi = 0
impulse_cost = 0.2
terminal = abs(x1) + abs(x2)

[grid]
x1 = -2 2 41
x2 = -2 2 41
time_steps = 20
"""


@pytest.fixture(scope="module")
def plane():
    spec = load_problem(PLANE, name="plane")
    grid = Grid([-2.0, -2.0], [2.0, 2.0], [41, 41])
    mesh = TimeMesh(0.0, 0.5, 20)
    return spec, grid, mesh


def node_of(grid, x, y):
    i = int(round((x - grid.lo[0]) / grid.step[0]))
    j = int(round((y - grid.lo[1]) / grid.step[1]))
    return i * int(grid.strides[0]) + j


def test_plane_no_jump_value(plane):
    spec, grid, mesh = plane
    q0 = solve_no_jump(spec, grid, mesh)
    # adversary pushes both coordinates away from the axes at unit speed;
    # the interpolation stencil lets a small boundary-clamp deficit creep
    # inward, so the tolerance is loose away from the centre
    assert q0.values[0][node_of(grid, 1.0, -1.0)] == pytest.approx(3.0, abs=5e-3)
    assert q0.values[0][node_of(grid, 0.0, 0.0)] == pytest.approx(1.0, abs=1e-9)


def test_plane_terminal_closure(plane):
    spec, grid, mesh = plane
    g1 = terminal_values(grid, spec)
    # from (1.5, 1.5): one diagonal jump to (0.5, 0.5) for 0.2 beats 3.0
    assert g1[node_of(grid, 1.5, 1.5)] == pytest.approx(1.2)
    assert g1[node_of(grid, 0.0, 0.0)] == pytest.approx(0.0)
    obstacle, _ = best_jump_grid(g1, grid, spec, spec.horizon)
    assert float(np.max(g1 - obstacle)) <= 1e-10


def test_plane_qvi_obstacle_and_equivalence(plane):
    spec, grid, mesh = plane
    fieldv, report = solve_qvi(spec, grid, mesh)
    for k in range(0, mesh.steps + 1, 5):
        obstacle, _ = best_jump_grid(fieldv.values[k], grid, spec, mesh.time(k))
        assert float(np.max(fieldv.values[k] - obstacle)) <= 1e-8
    iterates, wrep = solve_stopping_iterates(spec, grid, mesh)
    assert wrep.converged
    assert float(np.max(np.abs(iterates[-1].values - fieldv.values))) <= 1e-5


def test_plane_oracle_agrees_with_solver(plane):
    from impulsegame.oracle import OracleSettings, oracle_field

    spec, _, _ = plane
    h, steps = 1.0, 4
    grid = Grid([-2.0, -2.0], [2.0, 2.0], [5, 5])
    mesh = TimeMesh(0.0, 0.5, steps)
    fieldv, _ = solve_qvi(spec, grid, mesh)
    ofield = oracle_field(spec, [(-2.0, 2.0), (-2.0, 2.0)], OracleSettings(h, steps, 2))
    diff = float(np.max(np.abs(fieldv.values - ofield.values)))
    assert diff <= 3 * (h + mesh.dt)


def test_plane_full_check_suite(plane):
    from impulsegame.checks import run_checks

    spec, grid, mesh = plane
    rows = run_checks(spec, grid, mesh, level="full")
    failed = [r.name for r in rows if not r.passed]
    assert failed == [], f"failed rows: {failed}"


def test_plane_cli_solve_and_svg(tmp_path):
    prob = tmp_path / "plane.prob"
    prob.write_text(PLANE)
    out = tmp_path / "run"
    assert main(["solve", str(prob), "--out", str(out)]) == 0
    exp = tmp_path / "exp"
    code = main([
        "export", str(prob), "--field", str(out / "value.csv"),
        "--svg", "--slice", "t=0.25", "--out", str(exp),
    ])
    assert code == 0
    assert (exp / "value.svg").read_text().startswith("<svg")
    # two-dimensional SVG requires a slice
    code = main([
        "export", str(prob), "--field", str(out / "value.csv"),
        "--svg", "--out", str(tmp_path / "noslice"),
    ])
    assert code == 1
