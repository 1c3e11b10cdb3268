"""Invariant suite behind ``impulsegame check``.

Each check solves or reuses a field and asserts one structural
property of the scheme at an explicit tolerance, reporting a witness
node when it fails.  The quick level covers the obstacle inequality,
the decreasing stopping iterates and their agreement with the direct
fixed point, value growth bounds, the terminal limit and order
preservation of one backward step.  The full level adds the scaled
scheme equivalence, the independent lattice oracle and the two-sided
initialisation agreement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, TimeMesh, ValueField
from .impulse import best_jump_grid, terminal_values
from .oracle import OracleSettings, oracle_field
from .problem import ProblemSpec, ValidationReport, validate
from .solver import (
    SolveSettings,
    backward_step,
    solve_no_jump,
    solve_qvi,
    solve_qvi_scaled,
    solve_stopping_iterates,
)

__all__ = ["CheckRow", "run_checks", "run_field_checks"]

OBSTACLE_TOL = 1e-8
STOPPING_GAP_TOL = 1e-5
TWO_INIT_TOL = 1e-8


@dataclass
class CheckRow:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<24} {self.detail}"


def _obstacle_row(spec, grid, mesh, fieldv, tol=OBSTACLE_TOL) -> CheckRow:
    worst = -np.inf
    where = (0, 0)
    for k in range(mesh.steps + 1):
        nv, _ = best_jump_grid(fieldv.values[k], grid, spec, mesh.time(k))
        gap = fieldv.values[k] - nv
        j = int(np.argmax(gap))
        if gap[j] > worst:
            worst = float(gap[j])
            where = (k, j)
    ok = worst <= tol
    detail = f"max(v - N[v]) = {worst:.3e}"
    if not ok:
        k, j = where
        detail += f" at time index {k}, node {j}, state {grid.nodes[j].tolist()}"
    return CheckRow("obstacle-inequality", ok, detail)


def _terminal_row(spec, grid, mesh, fieldv) -> CheckRow:
    expected = terminal_values(grid, spec)
    gap = float(np.max(np.abs(fieldv.values[mesh.steps] - expected)))
    return CheckRow("terminal-slice", gap == 0.0, f"max |v(T) - G1| = {gap:.3e}")


def _stopping_rows(spec, grid, mesh, settings, qvi_field) -> list[CheckRow]:
    iterates, report = solve_stopping_iterates(spec, grid, mesh, settings)
    worst = -np.inf
    for a, b in zip(iterates, iterates[1:]):
        slack = 8.0 * np.spacing(np.maximum(np.abs(a.values), np.abs(b.values)))
        worst = max(worst, float(np.max(b.values - a.values - slack)))
    mono = CheckRow(
        "stopping-monotone", worst <= 0.0,
        f"max(w_next - w - 8ulp) = {worst:.3e}, iterates = {report.iterations}",
    )
    gap = float(np.max(np.abs(iterates[-1].values - qvi_field.values)))
    equiv = CheckRow(
        "stopping-vs-qvi", gap <= STOPPING_GAP_TOL,
        f"sup gap = {gap:.3e} (tol {STOPPING_GAP_TOL:g}), converged = {report.converged}",
    )
    return [mono, equiv]


def _growth_rows(spec, grid, mesh, fieldv, report: ValidationReport) -> list[CheckRow]:
    lb = report.lower_bound(mesh.t0, mesh.t_end)
    c_hat = report.growth_bound(mesh.t0, mesh.t_end)
    radius = 1.0 + np.linalg.norm(grid.nodes, axis=1)
    low_gap = float(np.min(fieldv.values - lb))
    up_gap = float(np.min(c_hat * radius[None, :] - fieldv.values))
    return [
        CheckRow("lower-bound", low_gap >= -1e-9,
                 f"min(v - lb) = {low_gap:.3e}, lb = {lb:.4g}"),
        CheckRow("linear-growth", up_gap >= -1e-9,
                 f"min(C(1+|x|) - v) = {up_gap:.3e}, C = {c_hat:.4g}"),
    ]


def _terminal_limit_row(spec, grid, mesh, fieldv) -> CheckRow:
    if mesh.steps < 8:
        return CheckRow("terminal-limit", True, "skipped (needs >= 8 time steps)")
    # centered sub-box: middle two thirds of each axis
    span = grid.hi - grid.lo
    inner = np.all(
        (grid.nodes >= grid.lo + span / 6.0) & (grid.nodes <= grid.hi - span / 6.0),
        axis=1,
    )
    g1 = fieldv.values[mesh.steps]
    errs = {}
    for mult in (2, 4, 8):
        sl = fieldv.values[mesh.steps - mult]
        errs[mult] = float(np.max(np.abs(sl[inner] - g1[inner])))
    k_fit = errs[8] / (8.0 * mesh.dt)
    # 2% fit margin absorbs interpolation-level curvature of the decay
    ok = all(errs[m] <= 1.02 * k_fit * m * mesh.dt + 1e-9 for m in (2, 4))
    return CheckRow(
        "terminal-limit", ok,
        f"errors {errs[2]:.3e}/{errs[4]:.3e}/{errs[8]:.3e} at 2/4/8 dt, K = {k_fit:.3g}",
    )


def _comparison_row(spec, grid, mesh, settings, fieldv, pairs: int, seed: int) -> CheckRow:
    rng = np.random.default_rng(seed)
    scale = float(np.max(np.abs(fieldv.values))) + 1.0
    t = mesh.time(max(mesh.steps - 1, 0))
    worst = -np.inf
    for _ in range(pairs):
        lowv = rng.uniform(-scale, scale, grid.n_nodes)
        highv = lowv + rng.uniform(0.0, scale, grid.n_nodes)
        out_low = backward_step(spec, grid, lowv, t, mesh.dt, settings, fixed_sweeps=6)
        out_high = backward_step(spec, grid, highv, t, mesh.dt, settings, fixed_sweeps=6)
        worst = max(worst, float(np.max(out_low - out_high)))
    return CheckRow(
        "comparison-step", worst <= 0.0,
        f"max order violation over {pairs} ordered pairs = {worst:.3e}",
    )


def _two_init_row(spec, grid, mesh, settings, fieldv, report) -> CheckRow:
    deep = SolveSettings(
        fp_tol=settings.fp_tol,
        max_sweeps=max(settings.max_sweeps, 400),
        wn_tol=settings.wn_tol,
        n_max=settings.n_max,
    )
    alt, _ = solve_qvi(spec, grid, mesh, deep, init="lower-bound", validation=report)
    gap = float(np.max(np.abs(alt.values - fieldv.values)))
    return CheckRow(
        "two-init-fixed-point", gap <= TWO_INIT_TOL,
        f"sup gap between initialisations = {gap:.3e} (tol {TWO_INIT_TOL:g})",
    )


def _gamma_row(spec, grid, mesh, settings, fieldv) -> CheckRow:
    scaled, _ = solve_qvi_scaled(spec, grid, mesh, settings)
    expected = np.exp(mesh.times)[:, None] * fieldv.values
    span = grid.hi - grid.lo
    inner = np.all(
        (grid.nodes > grid.lo + 1e-12 * span) & (grid.nodes < grid.hi - 1e-12 * span),
        axis=1,
    )
    diff = float(np.max(np.abs(scaled.values[:, inner] - expected[:, inner])))
    tol = 5.0 * (float(np.max(grid.step)) + mesh.dt)
    return CheckRow(
        "scaled-equivalence", diff <= tol,
        f"max |scaled - exp(t) v| = {diff:.3e} (tol {tol:.3g})",
    )


def _oracle_row(spec, grid, mesh, fieldv, report) -> CheckRow:
    # coarse lattice matched to grid nodes; coarse times divide the fine mesh
    counts = grid.counts - 1
    coarse_div = np.gcd(counts, 12 * np.ones_like(counts))
    h = float(np.max((grid.hi - grid.lo) / coarse_div))
    steps = next(d for d in (10, 8, 5, 4, 2, 1) if mesh.steps % d == 0)
    settings = OracleSettings(spacing=h, steps=steps, max_jumps=2)
    box = np.stack([grid.lo, grid.hi], axis=1)
    ofield = oracle_field(spec, box, settings)
    coarse_mesh = TimeMesh(mesh.t0, mesh.t_end, settings.steps)
    worst = -np.inf
    lattice = np.stack(
        np.meshgrid(
            *[ofield.lo[a] + h * np.arange(ofield.counts[a]) for a in range(spec.m)],
            indexing="ij",
        ),
        axis=-1,
    ).reshape(-1, spec.m)
    for kc in range(settings.steps + 1):
        t = coarse_mesh.time(kc)
        kf = int(round((t - mesh.t0) / mesh.dt))
        solver_vals = grid.interp_many(fieldv.values[kf], lattice)
        worst = max(worst, float(np.max(np.abs(solver_vals - ofield.values[kc]))))
    tol = 3.0 * (h + coarse_mesh.dt) * max(1.0, report.est_growth_f)
    return CheckRow(
        "oracle-comparison", worst <= tol,
        f"max |solver - oracle| = {worst:.3e} (tol {tol:.3g}, h = {h:g})",
    )


def run_checks(
    spec: ProblemSpec,
    grid: Grid,
    mesh: TimeMesh,
    settings: SolveSettings = SolveSettings(),
    level: str = "quick",
    seed: int = 2718,
) -> list[CheckRow]:
    """Run the invariant suite; returns one row per check."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    box = np.stack([grid.lo, grid.hi], axis=1)
    report = validate(spec, box, samples=1000, seed=seed)
    fieldv, _ = solve_qvi(spec, grid, mesh, settings)

    rows = [_obstacle_row(spec, grid, mesh, fieldv)]
    rows.append(_terminal_row(spec, grid, mesh, fieldv))
    rows.extend(_stopping_rows(spec, grid, mesh, settings, fieldv))
    rows.extend(_growth_rows(spec, grid, mesh, fieldv, report))
    rows.append(_terminal_limit_row(spec, grid, mesh, fieldv))
    rows.append(_comparison_row(spec, grid, mesh, settings, fieldv, pairs=20, seed=seed))
    if level == "full":
        rows.append(_gamma_row(spec, grid, mesh, settings, fieldv))
        rows.append(_oracle_row(spec, grid, mesh, fieldv, report))
        rows.append(_two_init_row(spec, grid, mesh, settings, fieldv, report))
    return rows


def run_field_checks(
    spec: ProblemSpec,
    fieldv: ValueField,
    settings: SolveSettings = SolveSettings(),
    seed: int = 2718,
) -> list[CheckRow]:
    """Checks applicable to an imported field (no solving)."""
    grid, mesh = fieldv.grid, fieldv.mesh
    rows = []
    finite = bool(np.isfinite(fieldv.values).all())
    rows.append(CheckRow("finite-values", finite,
                         "all entries finite" if finite else "non-finite entries found"))
    rows.append(_obstacle_row(spec, grid, mesh, fieldv))
    rows.append(_terminal_row(spec, grid, mesh, fieldv))
    box = np.stack([grid.lo, grid.hi], axis=1)
    report = validate(spec, box, samples=1000, seed=seed)
    rows.extend(_growth_rows(spec, grid, mesh, fieldv, report))
    return rows
