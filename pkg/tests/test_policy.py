import numpy as np
import pytest

from impulsegame.grid import Grid, TimeMesh
from impulsegame.policy import (
    JUMP,
    extract_policy,
    simulate,
    trajectory_divergence_check,
)
from impulsegame.problem import builtin, load_problem, validate
from impulsegame.solver import solve_qvi

from conftest import node_at

CHAINY = """\
[meta]
m = 1
t0 = 0.0
T = 1.0

[controls]
k1 = 0

[impulses]
e1 = -1

[dynamics]
f1 = 0

[jumps]
g1 = xi1

[costs]
psi = 0
impulse_cost = 0.001
terminal = abs(x1)
"""


@pytest.fixture(scope="module")
def dg1_policy(dg1_solved):
    spec, grid, mesh, fieldv, _ = dg1_solved
    return spec, grid, mesh, fieldv, extract_policy(fieldv, spec, grid, mesh)


def test_policy_continue_at_origin(dg1_policy):
    spec, grid, mesh, fieldv, pol = dg1_policy
    what, _ = pol.decision(0, node_at(grid, 0.0))
    assert what == "continue"


def test_policy_jumps_only_when_strictly_better(dg1_policy):
    spec, grid, mesh, fieldv, pol = dg1_policy
    from impulsegame.impulse import best_jump_grid

    for k in (0, 50, 99):
        t = mesh.time(k)
        obstacle, _ = best_jump_grid(fieldv.values[k], grid, spec, t)
        jumping = pol.kind[k] == JUMP
        if np.any(jumping):
            # at flagged nodes the obstacle beats the slice value strictly
            assert np.all(obstacle[jumping] < fieldv.values[k][jumping] + 1e-9)
        # where the obstacle is clearly worse, never jump
        clear = obstacle > fieldv.values[k] + 1e-6
        assert not np.any(jumping & clear)


def test_policy_jump_set_structure(dg1_policy):
    # interior node decisions tie (obstacle binds with equality at the fixed
    # point), so strict jumps concentrate on the horizon slice: every state
    # above the single-jump break-even 1.05 jumps there
    spec, grid, mesh, fieldv, pol = dg1_policy
    assert not np.any(pol.kind[: mesh.steps] == JUMP)
    terminal_jumps = pol.kind[mesh.steps] == JUMP
    xs = grid.nodes[:, 0]
    assert np.array_equal(terminal_jumps, xs > 1.05 + 1e-12)
    what, xi = pol.decision(mesh.steps, node_at(grid, 3.5))
    assert what == "jump" and xi.tolist() == [-2.0]


def test_policy_terminal_rule(dg1_policy):
    spec, grid, mesh, fieldv, pol = dg1_policy
    what, xi = pol.decision(mesh.steps, node_at(grid, 3.0))
    assert what == "jump" and xi.tolist() == [-2.0]
    what, _ = pol.decision(mesh.steps, node_at(grid, 1.0))
    assert what == "continue"  # |1| < |1-2| + 0.1


def test_huge_cost_policy_is_continue_everywhere():
    text = CHAINY.replace("impulse_cost = 0.001", "impulse_cost = 1000")
    spec = load_problem(text)
    grid = Grid([-6.0], [6.0], [61])
    mesh = TimeMesh(0.0, 1.0, 20)
    fieldv, _ = solve_qvi(spec, grid, mesh)
    pol = extract_policy(fieldv, spec, grid, mesh)
    assert not np.any(pol.kind == JUMP)


def test_simulate_dg1_worst_case(dg1_policy):
    spec, grid, mesh, fieldv, pol = dg1_policy
    traj = simulate(spec, pol, "worst-case", (0.0, [3.0]), mesh)
    v03 = fieldv.values[0][node_at(grid, 3.0)]
    assert abs(traj.total - v03) <= 3 * (0.05 + 0.01)
    assert not traj.truncated
    # equilibrium play: one jump of -2 mid-flight plus a marginal one at the
    # horizon; every event is the single available impulse
    assert len(traj.events) == 2
    assert all(e.xi.tolist() == [-2.0] for e in traj.events)
    assert traj.events[-1].t == mesh.t_end
    # payoff accounting identity, exact
    assert traj.total == traj.running_cost + traj.jump_cost_total + traj.terminal_cost
    # post-state bookkeeping matches the jump map
    for e in traj.events:
        expected = e.pre_state + spec.jump(e.t, e.pre_state[None, :], e.xi)[0]
        assert np.array_equal(e.post_state, expected)


def test_simulate_static_game_pays_terminal_exactly():
    text = CHAINY.replace("impulse_cost = 0.001", "impulse_cost = 1000")
    spec = load_problem(text)
    grid = Grid([-6.0], [6.0], [61])
    mesh = TimeMesh(0.0, 1.0, 20)
    fieldv, _ = solve_qvi(spec, grid, mesh)
    pol = extract_policy(fieldv, spec, grid, mesh)
    traj = simulate(spec, pol, "worst-case", (0.0, [2.5]), mesh)
    assert traj.total == 2.5
    assert traj.events == []


def test_fixed_adversary_never_beats_worst_case(all_solved):
    spec, grid, mesh, fieldv, _ = all_solved["dg1-rich"]
    pol = extract_policy(fieldv, spec, grid, mesh)
    worst = simulate(spec, pol, "worst-case", (0.0, [3.0]), mesh)
    fixed = simulate(spec, pol, ("fixed", ["0"]), (0.0, [3.0]), mesh)
    lhat = 3 * (0.05 + 0.01)
    assert fixed.total <= worst.total + lhat


def test_random_adversary_seeded_and_bounded(all_solved):
    spec, grid, mesh, fieldv, _ = all_solved["dg1"]
    pol = extract_policy(fieldv, spec, grid, mesh)
    a = simulate(spec, pol, ("random", 42), (0.0, [3.0]), mesh)
    b = simulate(spec, pol, ("random", 42), (0.0, [3.0]), mesh)
    worst = simulate(spec, pol, "worst-case", (0.0, [3.0]), mesh)
    assert a.total == b.total
    assert a.total <= worst.total + 3 * (0.05 + 0.01)


def test_jump_cap_forces_continue():
    spec = load_problem(CHAINY)
    grid = Grid([-6.0], [6.0], [61])
    mesh = TimeMesh(0.0, 1.0, 20)
    fieldv, _ = solve_qvi(spec, grid, mesh)
    pol = extract_policy(fieldv, spec, grid, mesh)
    # static game, six cheap unit jumps pay from x = 6; exact ties make the
    # controller defer them all to the horizon, where the per-node cap fires
    traj = simulate(spec, pol, "worst-case", (0.0, [6.0]), mesh)
    assert traj.forced_continues >= 1
    assert len(traj.events) == 3
    assert [e.pre_state[0] for e in traj.events] == [6.0, 5.0, 4.0]
    assert all(e.t == mesh.t_end for e in traj.events)
    assert traj.total == traj.running_cost + traj.jump_cost_total + traj.terminal_cost


def test_simulate_rejects_bad_start(dg1_policy):
    spec, grid, mesh, fieldv, pol = dg1_policy
    with pytest.raises(ValueError, match="outside the grid box"):
        simulate(spec, pol, "worst-case", (0.0, [7.0]), mesh)
    with pytest.raises(ValueError, match="not a mesh node"):
        simulate(spec, pol, "worst-case", (0.0037, [1.0]), mesh)


def test_divergence_bound_drift_free(dg1):
    spec, grid, mesh = dg1
    report = validate(spec, [(-6.0, 6.0)], samples=200, seed=2)
    tau_seq = np.ones((mesh.steps, 1))
    out = trajectory_divergence_check(
        spec, (tau_seq, []), [1.0], [1.3], mesh, report
    )
    # x-independent drift and jumps: separation constant, bound exact
    assert np.allclose(out.deviations, 0.3)
    assert not out.violated
    assert out.lipschitz == 0.0


def test_divergence_bound_linear_drift():
    text = CHAINY.replace("f1 = 0", "f1 = x1").replace(
        "impulse_cost = 0.001", "impulse_cost = 0.1")
    spec = load_problem(text)
    mesh = TimeMesh(0.0, 1.0, 100)
    report = validate(spec, [(-6.0, 6.0)], samples=200, seed=2)
    assert report.est_lipschitz_f == pytest.approx(1.0, abs=1e-9)
    tau_seq = np.zeros((mesh.steps, 1))
    out = trajectory_divergence_check(spec, (tau_seq, []), [1.0], [1.01], mesh, report)
    # Euler compounding stays below the exponential bound
    assert out.deviations[-1] == pytest.approx(0.01 * (1 + mesh.dt) ** 100, rel=1e-9)
    assert not out.violated


def test_divergence_additive_jumps_cancel():
    text = CHAINY.replace("f1 = 0", "f1 = x1").replace(
        "impulse_cost = 0.001", "impulse_cost = 0.1")
    spec = load_problem(text)
    mesh = TimeMesh(0.0, 1.0, 100)
    report = validate(spec, [(-6.0, 6.0)], samples=200, seed=2)
    tau_seq = np.zeros((mesh.steps, 1))
    schedule = [(50, np.array([-1.0]))]
    with_jump = trajectory_divergence_check(
        spec, (tau_seq, schedule), [1.0], [1.01], mesh, report
    )
    without = trajectory_divergence_check(
        spec, (tau_seq, []), [1.0], [1.01], mesh, report
    )
    # an additive jump cancels in the difference, while the bound grows
    assert with_jump.deviations[-1] == without.deviations[-1]
    assert with_jump.bounds[-1] > without.bounds[-1]
    assert not with_jump.violated
