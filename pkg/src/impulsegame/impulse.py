"""Best-jump operators and the terminal value.

The minimising player may displace the state by ``g(t, x, xi)`` at cost
``cost(t, x, xi) > 0``.  Applied to a value slice this gives the jump
obstacle

    min over xi in E of  v(t, x + g(t, x, xi)) + cost(t, x, xi)

where the displaced state is read from the slice by clamped multilinear
interpolation.  The scaled variant multiplies the cost by ``exp(t)`` and
is what the exponentially scaled scheme uses.

At the horizon jumps may still pay, so the terminal slice is not the raw
terminal cost ``G`` but its closure under profitable jumps: first the
single-jump improvement with ``G`` evaluated exactly at the displaced
states, then repeated on-grid jump passes until no chain of jumps can
improve any node.  The closure is what makes the solved field satisfy
the obstacle inequality at the final time as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .grid import Grid
from .problem import ProblemError, ProblemSpec

__all__ = ["JumpResult", "best_jump", "best_jump_scaled", "best_jump_grid",
           "terminal_values"]


@dataclass(frozen=True)
class JumpResult:
    value: float
    best_xi: np.ndarray
    xi_index: int


def best_jump_grid(
    slice_values: np.ndarray,
    grid: Grid,
    spec: ProblemSpec,
    t: float,
    points: np.ndarray | None = None,
    cost_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Best-jump value and first minimising impulse index at many points."""
    pts = grid.nodes if points is None else np.atleast_2d(np.asarray(points, dtype=np.float64))
    best = None
    idx = np.zeros(pts.shape[0], dtype=np.int64)
    for j in range(spec.n_impulses):
        xi = spec.impulses[j]
        try:
            displaced = pts + spec.jump(t, pts, xi)
            cand = grid.interp_many(slice_values, displaced) + cost_scale * spec.jump_cost(t, pts, xi)
        except ex.ExprEvalError as exc:
            raise ProblemError(
                f"evaluating jump data at t={t:g}, xi={xi.tolist()}: {exc}"
            ) from exc
        if best is None:
            best = cand
        else:
            better = cand < best  # strict: first impulse wins exact ties
            best = np.where(better, cand, best)
            idx[better] = j
    return best, idx


def best_jump(slice_values, grid: Grid, spec: ProblemSpec, t: float, x) -> JumpResult:
    """Best single jump from state ``x`` against a value slice at time ``t``."""
    values, idx = best_jump_grid(slice_values, grid, spec, t, np.asarray(x, dtype=np.float64))
    j = int(idx[0])
    return JumpResult(float(values[0]), spec.impulses[j].copy(), j)


def best_jump_scaled(slice_values, grid: Grid, spec: ProblemSpec, t: float, x) -> JumpResult:
    """Best jump with the impulse cost scaled by exp(t)."""
    values, idx = best_jump_grid(
        slice_values, grid, spec, t, np.asarray(x, dtype=np.float64),
        cost_scale=float(np.exp(t)),
    )
    j = int(idx[0])
    return JumpResult(float(values[0]), spec.impulses[j].copy(), j)


def terminal_values(grid: Grid, spec: ProblemSpec, max_passes: int = 1000) -> np.ndarray:
    """Terminal slice: terminal cost closed under profitable jumps.

    The single-jump candidates evaluate the terminal cost exactly at the
    displaced states (no interpolation); further passes close the slice
    under jump chains on the grid.  With strictly positive costs only
    finitely many passes can improve anything.
    """
    t_end = spec.horizon
    pts = grid.nodes
    try:
        best = spec.terminal_cost(pts)
        for j in range(spec.n_impulses):
            xi = spec.impulses[j]
            displaced = pts + spec.jump(t_end, pts, xi)
            cand = spec.terminal_cost(displaced) + spec.jump_cost(t_end, pts, xi)
            best = np.minimum(best, cand)
    except ex.ExprEvalError as exc:
        raise ProblemError(f"evaluating terminal data: {exc}") from exc

    scale = max(1.0, float(np.max(np.abs(best))))
    for _ in range(max_passes):
        jumped, _ = best_jump_grid(best, grid, spec, t_end, pts)
        new = np.minimum(best, jumped)
        if float(np.max(best - new)) <= 1e-13 * scale:
            return new
        best = new
    raise ProblemError(
        "terminal jump closure did not stabilise; impulse costs may be "
        "too small relative to the terminal cost range"
    )
