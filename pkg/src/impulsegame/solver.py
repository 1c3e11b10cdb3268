"""Backward semi-Lagrangian schemes for the minimax impulse game.

All schemes march one explicit-Euler step along the adversary's
characteristics and interpolate the next time slice at the displaced
points:

    continuation(x) = max over tau of [ psi(t, x, tau) dt
                                        + V(t + dt, x + f(t, x, tau) dt) ]

and intersect with the jump obstacle.  Because the obstacle reads the
slice being solved, every time step runs an inner fixed point: Jacobi
sweeps ``u <- min(continuation, obstacle(u))`` where each sweep reads a
frozen copy of the previous one.  Sweeps therefore parallelise over
nodes without changing results, and repeated sweeps resolve chains of
several jumps taken at one time.

Four entry points:

* :func:`solve_no_jump` - the jump-free game (pure drift maximisation).
* :func:`solve_stopping_iterates` - the iterated optimal stopping
  sequence; iterate ``n`` allows one more layer of jumps than iterate
  ``n - 1`` and the sequence decreases to the fixed point.
* :func:`solve_qvi` - the direct fixed point of the obstacle scheme,
  the discrete counterpart of the Isaacs quasi-variational inequality.
* :func:`solve_qvi_scaled` - the same game after scaling values by
  ``exp(t)``, which adds a zeroth-order term, discretised implicitly
  by damping the one-step value with ``1/(1 + dt)``.

Reductions over the finite control and impulse sets are ordered with no
early exit, so results are bit-reproducible regardless of thread count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .grid import Grid, TimeMesh, ValueField
from .impulse import terminal_values
from .problem import ProblemSpec, ValidationReport, validate

__all__ = [
    "SolverError",
    "ConvergenceError",
    "SolveSettings",
    "ResidualStats",
    "SolveReport",
    "solve_no_jump",
    "solve_stopping_iterates",
    "solve_qvi",
    "solve_qvi_scaled",
    "qvi_residual",
    "backward_step",
    "cfl_ratio",
]


class SolverError(Exception):
    pass


class ConvergenceError(SolverError):
    """Inner fixed point did not reach tolerance within the sweep budget."""

    def __init__(self, time_index: int, delta: float, sweeps: int):
        super().__init__(
            f"fixed point at time index {time_index} still moving by {delta:.3e} "
            f"after {sweeps} sweeps"
        )
        self.time_index = time_index
        self.delta = delta
        self.sweeps = sweeps


@dataclass(frozen=True)
class SolveSettings:
    fp_tol: float = 1e-9       # sup-norm tolerance of the per-slice fixed point
    max_sweeps: int = 50       # sweep budget per time step
    wn_tol: float = 1e-6       # stopping-iterate sup-norm tolerance
    n_max: int = 32            # cap on stopping iterates

    def __post_init__(self):
        if self.fp_tol <= 0 or self.wn_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_sweeps < 1 or self.n_max < 1:
            raise ValueError("iteration counters must be at least 1")


@dataclass(frozen=True)
class ResidualStats:
    max_abs: float
    mean_abs: float
    binding_fraction: float  # interior nodes where the jump obstacle is active


@dataclass
class SolveReport:
    scheme: str
    iterations: int = 0
    converged: bool = True
    deltas: list = field(default_factory=list)
    sweeps_max: int = 0
    wall_time_s: float = 0.0
    residual: ResidualStats | None = None
    notes: str = ""


# -- per-slice building blocks -----------------------------------------


def _drift_data(spec: ProblemSpec, grid: Grid, t: float, dt: float):
    """Stacked displaced points (n_controls*n, m) and rewards (n_controls, n)."""
    pts = grid.nodes
    dests = []
    psis = []
    for j in range(spec.n_controls):
        tau = spec.controls[j]
        try:
            dests.append(pts + dt * spec.drift(t, pts, tau))
            psis.append(spec.running(t, pts, tau))
        except ex.ExprEvalError as exc:
            raise SolverError(
                f"evaluating drift data at t={t:g}, tau={tau.tolist()}: {exc}"
            ) from exc
    return np.concatenate(dests, axis=0), np.stack(psis)


def _jump_data(spec: ProblemSpec, grid: Grid, t: float):
    """Stacked displaced points (n_impulses*n, m) and costs (n_impulses, n)."""
    pts = grid.nodes
    dests = []
    costs = []
    for j in range(spec.n_impulses):
        xi = spec.impulses[j]
        try:
            dests.append(pts + spec.jump(t, pts, xi))
            costs.append(spec.jump_cost(t, pts, xi))
        except ex.ExprEvalError as exc:
            raise SolverError(
                f"evaluating jump data at t={t:g}, xi={xi.tolist()}: {exc}"
            ) from exc
    return np.concatenate(dests, axis=0), np.stack(costs)


def _continuation(grid: Grid, next_slice: np.ndarray, drift_data, dt: float,
                  reward_scale: float = 1.0, damping: float = 1.0) -> np.ndarray:
    """Ordered max over controls of one explicit-Euler step.

    One batched interpolation covers every control; the reduction order
    over controls is fixed, so results match a per-control loop bitwise.
    """
    dests, psis = drift_data
    moved = grid.interp_many(next_slice, dests).reshape(psis.shape)
    cand = (reward_scale * psis * dt + moved) * damping
    return np.maximum.reduce(cand, axis=0)


def _obstacle(grid: Grid, slice_values: np.ndarray, jump_data,
              cost_scale: float = 1.0) -> np.ndarray:
    """Ordered min over impulses of displaced value plus cost."""
    dests, costs = jump_data
    moved = grid.interp_many(slice_values, dests).reshape(costs.shape)
    return np.minimum.reduce(moved + cost_scale * costs, axis=0)


def _fixed_point(cont: np.ndarray, u0: np.ndarray, grid: Grid, jump_data,
                 settings: SolveSettings, time_index: int,
                 cost_scale: float = 1.0,
                 fixed_sweeps: int | None = None) -> tuple[np.ndarray, int, float]:
    """Jacobi sweeps u <- min(cont, obstacle(u)) until the slice settles."""
    u = u0
    delta = np.inf
    sweeps = fixed_sweeps if fixed_sweeps is not None else settings.max_sweeps
    for sweep in range(1, sweeps + 1):
        new = np.minimum(cont, _obstacle(grid, u, jump_data, cost_scale))
        delta = float(np.max(np.abs(new - u)))
        u = new
        if fixed_sweeps is None and delta < settings.fp_tol:
            return u, sweep, delta
    if fixed_sweeps is not None:
        return u, sweeps, delta
    raise ConvergenceError(time_index, delta, settings.max_sweeps)


def _check_finite(values: np.ndarray, grid: Grid, k: int, t: float, scheme: str):
    if np.isfinite(values).all():
        return
    bad = int(np.argmin(np.isfinite(values)))
    raise SolverError(
        f"{scheme}: non-finite value at time index {k} (t={t:g}), "
        f"node {bad}, state {grid.nodes[bad].tolist()}"
    )


def cfl_ratio(spec: ProblemSpec, grid: Grid, mesh: TimeMesh) -> float:
    """dt divided by the largest step keeping displacements inside one cell.

    Ratios above 1 mean the explicit characteristics can overshoot a
    grid cell; callers should warn.
    """
    pts = grid.nodes
    max_f = np.zeros(spec.m)
    for tau in spec.controls:
        for t in (mesh.t0, mesh.t_end):
            fv = np.abs(spec.drift(t, pts, tau))
            max_f = np.maximum(max_f, fv.max(axis=0))
    limits = grid.step / np.maximum(max_f, 1e-300)
    return float(mesh.dt / np.min(limits))


# -- schemes ------------------------------------------------------------


def solve_no_jump(spec: ProblemSpec, grid: Grid, mesh: TimeMesh) -> ValueField:
    """Value of the jump-free game: drift maximisation with terminal cost."""
    fieldv = ValueField(grid, mesh)
    fieldv.values[mesh.steps] = spec.terminal_cost(grid.nodes)
    _check_finite(fieldv.values[mesh.steps], grid, mesh.steps, mesh.t_end, "no-jump")
    dt = mesh.dt
    for k in range(mesh.steps - 1, -1, -1):
        t = mesh.time(k)
        drift_data = _drift_data(spec, grid, t, dt)
        fieldv.values[k] = _continuation(grid, fieldv.values[k + 1], drift_data, dt)
        _check_finite(fieldv.values[k], grid, k, t, "no-jump")
    return fieldv


def solve_stopping_iterates(
    spec: ProblemSpec, grid: Grid, mesh: TimeMesh,
    settings: SolveSettings = SolveSettings(),
) -> tuple[list[ValueField], SolveReport]:
    """Iterated optimal stopping sequence, decreasing to the game value.

    Iterate 0 is the jump-free value with the raw terminal cost.  Every
    later iterate uses the jump-closed terminal slice and takes its jump
    obstacle from the previous iterate at the same time, so iterate n
    values strategies with n layers of jumps.  Returns all iterates;
    stopping short of convergence is reported, not raised, since the
    truncated sequence is still a valid upper approximation.
    """
    start = time.perf_counter()
    report = SolveReport(scheme="wn")
    iterates = [solve_no_jump(spec, grid, mesh)]
    g1 = terminal_values(grid, spec)
    dt = mesh.dt

    drift_cache = {}
    jump_cache = {}
    for n in range(1, settings.n_max + 1):
        prev = iterates[-1]
        cur = ValueField(grid, mesh)
        cur.values[mesh.steps] = g1
        for k in range(mesh.steps - 1, -1, -1):
            t = mesh.time(k)
            if k not in drift_cache:
                drift_cache[k] = _drift_data(spec, grid, t, dt)
                jump_cache[k] = _jump_data(spec, grid, t)
            cont = _continuation(grid, cur.values[k + 1], drift_cache[k], dt)
            obs = _obstacle(grid, prev.values[k], jump_cache[k])
            cur.values[k] = np.minimum(obs, cont)
            _check_finite(cur.values[k], grid, k, t, "wn")
        delta = float(np.max(np.abs(cur.values - prev.values)))
        report.deltas.append(delta)
        iterates.append(cur)
        report.iterations = n
        if delta < settings.wn_tol:
            report.converged = True
            break
    else:
        report.converged = False
        report.notes = f"not converged at n_max={settings.n_max}"
    report.wall_time_s = time.perf_counter() - start
    return iterates, report


def _initial_slices(spec, grid, mesh, init, validation: ValidationReport | None):
    """Per-slice starting guesses for the inner fixed points."""
    if isinstance(init, ValueField):
        expected = (mesh.steps + 1, grid.n_nodes)
        if init.values.shape != expected:
            raise ValueError(
                f"init field shape {init.values.shape} does not match {expected}"
            )
        return init.values
    if init == "from-q0":
        return solve_no_jump(spec, grid, mesh).values
    if init == "lower-bound":
        report = validation
        if report is None:
            box = np.stack([grid.lo, grid.hi], axis=1)
            report = validate(spec, box, samples=512, seed=1729)
        lb = report.lower_bound(mesh.t0, mesh.t_end)
        return np.full((mesh.steps + 1, grid.n_nodes), lb)
    raise ValueError(f"init must be a ValueField, 'from-q0' or 'lower-bound', got {init!r}")


def solve_qvi(
    spec: ProblemSpec, grid: Grid, mesh: TimeMesh,
    settings: SolveSettings = SolveSettings(),
    init="from-q0",
    validation: ValidationReport | None = None,
) -> tuple[ValueField, SolveReport]:
    """Direct fixed point of the obstacle scheme (discrete Isaacs QVI).

    ``init`` selects the starting guess of each slice's inner fixed
    point: the jump-free value (default), the constant growth-based
    lower bound, or a caller-provided field.  The converged result does
    not depend on the choice (strictly positive jump costs make the
    fixed point unique); iteration counts do.
    """
    start = time.perf_counter()
    report = SolveReport(scheme="qvi")
    init_slices = _initial_slices(spec, grid, mesh, init, validation)

    fieldv = ValueField(grid, mesh)
    fieldv.values[mesh.steps] = terminal_values(grid, spec)
    _check_finite(fieldv.values[mesh.steps], grid, mesh.steps, mesh.t_end, "qvi")
    dt = mesh.dt
    for k in range(mesh.steps - 1, -1, -1):
        t = mesh.time(k)
        drift_data = _drift_data(spec, grid, t, dt)
        jump_data = _jump_data(spec, grid, t)
        cont = _continuation(grid, fieldv.values[k + 1], drift_data, dt)
        u, sweeps, delta = _fixed_point(
            cont, np.asarray(init_slices[k], dtype=np.float64), grid, jump_data,
            settings, k,
        )
        fieldv.values[k] = u
        _check_finite(u, grid, k, t, "qvi")
        report.deltas.append(delta)
        report.sweeps_max = max(report.sweeps_max, sweeps)
    report.iterations = report.sweeps_max
    report.residual = qvi_residual(fieldv, spec, grid, mesh)
    report.wall_time_s = time.perf_counter() - start
    return fieldv, report


def solve_qvi_scaled(
    spec: ProblemSpec, grid: Grid, mesh: TimeMesh,
    settings: SolveSettings = SolveSettings(),
) -> tuple[ValueField, SolveReport]:
    """Obstacle scheme for values scaled by exp(t).

    Scaling v by exp(t) turns the pure transport equation into one with
    a zeroth-order term; that term is discretised implicitly by damping
    the one-step value with 1/(1 + dt), which is unconditionally stable
    and first-order consistent.  Running reward and impulse cost pick up
    the exp(t) factor and the terminal slice is exp(T) times the
    jump-closed terminal value.
    """
    start = time.perf_counter()
    report = SolveReport(scheme="gamma")
    q0 = solve_no_jump(spec, grid, mesh)

    fieldv = ValueField(grid, mesh)
    fieldv.values[mesh.steps] = float(np.exp(mesh.t_end)) * terminal_values(grid, spec)
    _check_finite(fieldv.values[mesh.steps], grid, mesh.steps, mesh.t_end, "gamma")
    dt = mesh.dt
    damping = 1.0 / (1.0 + dt)
    for k in range(mesh.steps - 1, -1, -1):
        t = mesh.time(k)
        scale = float(np.exp(t))
        drift_data = _drift_data(spec, grid, t, dt)
        jump_data = _jump_data(spec, grid, t)
        cont = _continuation(
            grid, fieldv.values[k + 1], drift_data, dt,
            reward_scale=scale, damping=damping,
        )
        u, sweeps, delta = _fixed_point(
            cont, scale * q0.values[k], grid, jump_data, settings, k,
            cost_scale=scale,
        )
        fieldv.values[k] = u
        _check_finite(u, grid, k, t, "gamma")
        report.deltas.append(delta)
        report.sweeps_max = max(report.sweeps_max, sweeps)
    report.iterations = report.sweeps_max
    report.wall_time_s = time.perf_counter() - start
    return fieldv, report


def backward_step(
    spec: ProblemSpec, grid: Grid, next_slice: np.ndarray, t: float, dt: float,
    settings: SolveSettings = SolveSettings(),
    init_slice: np.ndarray | None = None,
    fixed_sweeps: int | None = None,
) -> np.ndarray:
    """One full backward step of the obstacle scheme from a given slice.

    Exposed for monotonicity studies: the step is a composition of
    interpolation with nonnegative weights, ordered max/min reductions
    and the jump obstacle, hence order preserving in its input slice.
    With ``fixed_sweeps`` both branches of a comparison run the same
    sweep count, making the preservation exact in floating point.
    """
    next_slice = np.asarray(next_slice, dtype=np.float64)
    drift_data = _drift_data(spec, grid, t, dt)
    jump_data = _jump_data(spec, grid, t)
    cont = _continuation(grid, next_slice, drift_data, dt)
    u0 = cont if init_slice is None else np.asarray(init_slice, dtype=np.float64)
    u, _, _ = _fixed_point(cont, u0, grid, jump_data, settings, -1,
                           fixed_sweeps=fixed_sweeps)
    return u


def qvi_residual(fieldv: ValueField, spec: ProblemSpec, grid: Grid,
                 mesh: TimeMesh) -> ResidualStats:
    """Discrete residual of the Isaacs quasi-variational inequality.

    At interior nodes of every non-terminal slice, the time derivative
    is a forward difference and the gradient a central difference; the
    residual is max(min over tau of the transport term, v minus the jump
    obstacle).  Also reports the fraction of interior nodes where the
    obstacle is active.
    """
    dt = mesh.dt
    shape = tuple(int(c) for c in grid.counts)
    interior = np.ones(shape, dtype=bool)
    for a in range(grid.ndim):
        sl = [slice(None)] * grid.ndim
        sl[a] = 0
        interior[tuple(sl)] = False
        sl[a] = -1
        interior[tuple(sl)] = False
    interior = interior.ravel()

    pts = grid.nodes
    max_abs = 0.0
    total = 0.0
    count = 0
    binding = 0
    for k in range(mesh.steps):
        t = mesh.time(k)
        v = fieldv.values[k]
        v_t = (fieldv.values[k + 1] - v) / dt
        vg = v.reshape(shape)
        grads = []
        for a in range(grid.ndim):
            d = np.gradient(vg, grid.step[a], axis=a)
            grads.append(d.ravel())
        pde = None
        for j in range(spec.n_controls):
            tau = spec.controls[j]
            fv = spec.drift(t, pts, tau)
            adv = np.zeros(grid.n_nodes)
            for a in range(grid.ndim):
                adv = adv + grads[a] * fv[:, a]
            cand = -v_t - adv - spec.running(t, pts, tau)
            pde = cand if pde is None else np.minimum(pde, cand)
        obs_gap = v - _obstacle(grid, v, _jump_data(spec, grid, t))
        res = np.maximum(pde, obs_gap)[interior]
        max_abs = max(max_abs, float(np.max(np.abs(res))))
        total += float(np.sum(np.abs(res)))
        count += res.shape[0]
        binding += int(np.sum(obs_gap[interior] >= -1e-8))
    return ResidualStats(
        max_abs=max_abs,
        mean_abs=total / max(count, 1),
        binding_fraction=binding / max(count, 1),
    )
