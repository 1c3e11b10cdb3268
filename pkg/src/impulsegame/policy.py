"""Feedback decisions, trajectory simulation and payoff accounting.

A solved value field induces a feedback rule at every space-time node:
jump with the best impulse when the jump obstacle strictly beats the
one-step continuation value (beyond the fixed-point tolerance, so
discretisation dust never triggers a jump), otherwise continue with the
first maximising control.  Simulation plays that rule against an
adversary (worst-case greedy lookahead on the same field, a fixed
control expression, or seeded random picks) and accounts the realised
payoff: integrated running reward plus impulse costs plus terminal
cost.  States are left-continuous at jumps; a jump exactly at the
horizon routes the terminal cost through the post-jump state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .grid import Grid, TimeMesh, ValueField, interp
from .impulse import best_jump
from .problem import ProblemSpec, ValidationReport

__all__ = [
    "FeedbackPolicy",
    "JumpEvent",
    "Trajectory",
    "extract_policy",
    "simulate",
    "DivergenceReport",
    "trajectory_divergence_check",
    "MAX_JUMPS_PER_NODE",
]

MAX_JUMPS_PER_NODE = 3  # forced continue afterwards; keeps simulations finite

CONTINUE = 0
JUMP = 1


@dataclass
class FeedbackPolicy:
    """Per-node decisions plus the field they were extracted from.

    ``kind[k, i]`` is CONTINUE or JUMP; ``index[k, i]`` the control or
    impulse index.  The field reference lets the simulator re-derive
    decisions at off-grid states with the same rule.
    """

    spec: ProblemSpec
    grid: Grid
    mesh: TimeMesh
    fieldv: ValueField
    kind: np.ndarray
    index: np.ndarray
    eps: float

    def decision(self, k: int, node: int) -> tuple[str, np.ndarray]:
        if self.kind[k, node] == JUMP:
            return "jump", self.spec.impulses[self.index[k, node]]
        return "continue", self.spec.controls[self.index[k, node]]


def _continuation_candidates(spec, grid, next_slice, t, dt, x):
    """One-step value per control at a single state; returns (values,)."""
    vals = np.empty(spec.n_controls)
    for j in range(spec.n_controls):
        tau = spec.controls[j]
        dest = x + dt * spec.drift(t, x[None, :], tau)[0]
        vals[j] = float(spec.running(t, x[None, :], tau)[0]) * dt + interp(
            next_slice, grid, dest
        )
    return vals


def _terminal_jump_candidates(spec, x):
    """Exact one-jump terminal values per impulse from state x."""
    t_end = spec.horizon
    vals = np.empty(spec.n_impulses)
    for j in range(spec.n_impulses):
        xi = spec.impulses[j]
        post = x + spec.jump(t_end, x[None, :], xi)[0]
        vals[j] = float(spec.terminal_cost(post[None, :])[0]) + float(
            spec.jump_cost(t_end, x[None, :], xi)[0]
        )
    return vals


def extract_policy(
    fieldv: ValueField, spec: ProblemSpec, grid: Grid, mesh: TimeMesh,
    eps: float = 1e-9,
) -> FeedbackPolicy:
    """Feedback rule from a solved field, ties resolved continue-first."""
    n = grid.n_nodes
    steps = mesh.steps
    kind = np.zeros((steps + 1, n), dtype=np.int8)
    index = np.zeros((steps + 1, n), dtype=np.int64)
    pts = grid.nodes
    dt = mesh.dt

    from .solver import _drift_data, _jump_data  # shared per-slice step data

    for k in range(steps):
        t = mesh.time(k)
        dests, psis = _drift_data(spec, grid, t, dt)
        stacked = psis * dt + grid.interp_many(fieldv.values[k + 1], dests).reshape(psis.shape)
        tau_idx = np.argmax(stacked, axis=0)  # first maximiser wins ties
        cont = np.max(stacked, axis=0)
        jdests, costs = _jump_data(spec, grid, t)
        cands = grid.interp_many(fieldv.values[k], jdests).reshape(costs.shape) + costs
        xi_idx = np.argmin(cands, axis=0)
        obs = np.min(cands, axis=0)
        jumping = obs < cont - eps
        kind[k, jumping] = JUMP
        index[k, jumping] = xi_idx[jumping]
        index[k, ~jumping] = tau_idx[~jumping]

    # horizon: exact single-jump rule against the raw terminal cost
    g_now = spec.terminal_cost(pts)
    t_end = spec.horizon
    best = None
    best_idx = np.zeros(n, dtype=np.int64)
    for j in range(spec.n_impulses):
        xi = spec.impulses[j]
        post = pts + spec.jump(t_end, pts, xi)
        cand = spec.terminal_cost(post) + spec.jump_cost(t_end, pts, xi)
        if best is None:
            best = cand
        else:
            better = cand < best
            best = np.where(better, cand, best)
            best_idx[better] = j
    jumping = best < g_now - eps
    kind[steps, jumping] = JUMP
    index[steps, jumping] = best_idx[jumping]

    return FeedbackPolicy(spec, grid, mesh, fieldv, kind, index, eps)


@dataclass(frozen=True)
class JumpEvent:
    t: float
    xi: np.ndarray
    pre_state: np.ndarray
    post_state: np.ndarray
    cost: float


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray            # y(t_k) before any jump at t_k (left-continuous)
    decisions: list
    events: list
    controls_used: list
    running_cost: float
    jump_cost_total: float
    terminal_cost: float
    total: float
    truncated: bool = False
    forced_continues: int = 0
    step_costs: np.ndarray = field(default=None)  # type: ignore[assignment]


def _pick_adversary(spec, adversary, rng_holder):
    """Normalise the adversary argument to a callable (k, t, y) -> tau."""
    if adversary == "worst-case":
        return None  # handled inline, needs the value field
    if isinstance(adversary, tuple) and adversary and adversary[0] == "fixed":
        asts = [ex.parse(src, ("t",)) for src in adversary[1]]

        def fixed(k, t, y):
            return np.array([ex.evaluate(a, {"t": t}) for a in asts])

        return fixed
    if isinstance(adversary, tuple) and adversary and adversary[0] == "random":
        rng = np.random.default_rng(adversary[1])

        def random_pick(k, t, y):
            return spec.controls[rng.integers(spec.n_controls)]

        return random_pick
    raise ValueError(
        "adversary must be 'worst-case', ('fixed', [exprs]) or ('random', seed)"
    )


def simulate(
    spec: ProblemSpec,
    policy: FeedbackPolicy,
    adversary="worst-case",
    start=None,
    mesh: TimeMesh | None = None,
) -> Trajectory:
    """Integrate the controlled system from ``start = (t, x)`` on the mesh.

    Decisions are re-derived from the policy's value field at the exact
    state (not the nearest node), with the same strict-improvement jump
    rule; at most :data:`MAX_JUMPS_PER_NODE` jumps fire per time node.
    """
    mesh = mesh or policy.mesh
    grid = policy.grid
    fieldv = policy.fieldv
    t_start, x0 = start if start is not None else (mesh.t0, grid.nodes[0])
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if np.any(x0 < grid.lo) or np.any(x0 > grid.hi):
        raise ValueError(f"start state {x0.tolist()} outside the grid box")
    k0 = int(round((t_start - mesh.t0) / mesh.dt))
    if abs(mesh.time(k0) - t_start) > 1e-9:
        raise ValueError(f"start time {t_start} is not a mesh node")

    adv = _pick_adversary(spec, adversary, None)
    dt = mesh.dt
    eps = policy.eps

    y = x0.copy()
    times = [mesh.time(k0)]
    states = [y.copy()]
    decisions: list = []
    events: list = []
    controls_used: list = []
    step_costs: list = []
    running = 0.0
    jump_total = 0.0
    truncated = False
    forced = 0

    for k in range(k0, mesh.steps):
        t = mesh.time(k)
        inc = 0.0
        node_decisions = []
        # jump phase: strict improvement over the one-step continuation
        jumps_here = 0
        while True:
            jr = best_jump(fieldv.values[k], grid, spec, t, y)
            cont = float(np.max(
                _continuation_candidates(spec, grid, fieldv.values[k + 1], t, dt, y)
            ))
            if not jr.value < cont - eps:
                break
            if jumps_here == MAX_JUMPS_PER_NODE:
                forced += 1  # a further jump would pay but the cap bites
                break
            pre = y.copy()
            post = pre + spec.jump(t, pre[None, :], jr.best_xi)[0]
            cost = float(spec.jump_cost(t, pre[None, :], jr.best_xi)[0])
            events.append(JumpEvent(t, jr.best_xi.copy(), pre, post, cost))
            node_decisions.append(f"jump {jr.best_xi.tolist()}")
            jump_total += cost
            inc += cost
            y = post
            jumps_here += 1

        # adversary move
        if adv is None:
            cands = _continuation_candidates(spec, grid, fieldv.values[k + 1], t, dt, y)
            tau = spec.controls[int(np.argmax(cands))]
        else:
            tau = np.atleast_1d(np.asarray(adv(k, t, y), dtype=np.float64))
        controls_used.append(tau.copy())
        reward = float(spec.running(t, y[None, :], tau)[0]) * dt
        running += reward
        inc += reward
        node_decisions.append(f"continue {tau.tolist()}")
        y = y + dt * spec.drift(t, y[None, :], tau)[0]

        decisions.append("; ".join(node_decisions))
        step_costs.append(inc)
        times.append(mesh.time(k + 1))
        states.append(y.copy())
        if np.any(y < grid.lo) or np.any(y > grid.hi):
            truncated = True
            y = grid.clamp(y)
            states[-1] = y.copy()
            break

    # horizon: jumps may still pay, judged against the exact terminal cost
    inc = 0.0
    node_decisions = []
    if not truncated:
        jumps_here = 0
        while True:
            g_now = float(spec.terminal_cost(y[None, :])[0])
            cands = _terminal_jump_candidates(spec, y)
            j = int(np.argmin(cands))
            if not cands[j] < g_now - eps:
                break
            if jumps_here == MAX_JUMPS_PER_NODE:
                forced += 1
                break
            xi = spec.impulses[j]
            pre = y.copy()
            post = pre + spec.jump(spec.horizon, pre[None, :], xi)[0]
            cost = float(spec.jump_cost(spec.horizon, pre[None, :], xi)[0])
            events.append(JumpEvent(spec.horizon, xi.copy(), pre, post, cost))
            node_decisions.append(f"jump {xi.tolist()}")
            jump_total += cost
            inc += cost
            y = post
            jumps_here += 1

    terminal = float(spec.terminal_cost(y[None, :])[0])
    decisions.append("; ".join(node_decisions) if node_decisions else "terminal")
    step_costs.append(inc + terminal)

    return Trajectory(
        times=np.array(times),
        states=np.stack(states),
        decisions=decisions,
        events=events,
        controls_used=controls_used,
        running_cost=running,
        jump_cost_total=jump_total,
        terminal_cost=terminal,
        total=running + jump_total + terminal,
        truncated=truncated,
        forced_continues=forced,
        step_costs=np.array(step_costs),
    )


# -- trajectory separation bound ----------------------------------------


@dataclass
class DivergenceReport:
    deviations: np.ndarray
    bounds: np.ndarray
    max_deviation: float
    violated: bool
    lipschitz: float


def trajectory_divergence_check(
    spec: ProblemSpec,
    controls,
    x1,
    x2,
    mesh: TimeMesh,
    report: ValidationReport,
) -> DivergenceReport:
    """Integrate two states under shared controls and check the
    exponential separation bound.

    ``controls = (tau_seq, jump_schedule)`` with one control vector per
    step and ``jump_schedule`` a list of ``(time_index, xi)`` applied to
    both trajectories.  The admissible growth at sample time s is
    ``exp(L (s - t0)) * (1 + L)^jumps_so_far * |x1 - x2|`` with L the
    sampled Lipschitz estimate.
    """
    tau_seq, schedule = controls
    tau_seq = np.atleast_2d(np.asarray(tau_seq, dtype=np.float64))
    if tau_seq.shape[0] != mesh.steps:
        raise ValueError("need one control vector per time step")
    jumps_at: dict[int, list[np.ndarray]] = {}
    for k, xi in schedule:
        jumps_at.setdefault(int(k), []).append(np.atleast_1d(np.asarray(xi, float)))

    lip = report.lipschitz()
    y1 = np.atleast_1d(np.asarray(x1, dtype=np.float64)).copy()
    y2 = np.atleast_1d(np.asarray(x2, dtype=np.float64)).copy()
    base = float(np.linalg.norm(y1 - y2))
    dt = mesh.dt

    deviations = [base]
    bounds = [base]
    n_jumps = 0
    for k in range(mesh.steps):
        t = mesh.time(k)
        for xi in jumps_at.get(k, ()):
            y1 = y1 + spec.jump(t, y1[None, :], xi)[0]
            y2 = y2 + spec.jump(t, y2[None, :], xi)[0]
            n_jumps += 1
        tau = tau_seq[k]
        y1 = y1 + dt * spec.drift(t, y1[None, :], tau)[0]
        y2 = y2 + dt * spec.drift(t, y2[None, :], tau)[0]
        s = mesh.time(k + 1)
        deviations.append(float(np.linalg.norm(y1 - y2)))
        bounds.append(float(np.exp(lip * (s - mesh.t0)) * (1.0 + lip) ** n_jumps * base))

    deviations = np.array(deviations)
    bounds = np.array(bounds)
    slack = 1e-9 * (1.0 + np.abs(bounds))
    return DivergenceReport(
        deviations=deviations,
        bounds=bounds,
        max_deviation=float(np.max(deviations)),
        violated=bool(np.any(deviations > bounds + slack)),
        lipschitz=lip,
    )
