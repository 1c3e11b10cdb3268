"""Independent brute-force reference on a snapped lattice.

Ground truth for desk-scale instances: backward induction where every
displaced state is snapped to the nearest lattice node (ties resolved
by round-half-to-even), never interpolated.  The deliberate lack of
shared numerical machinery with the solver is the point; agreement
between the two is evidence, not circularity.

Per interior time node the controller may compose at most ``max_jumps``
jumps (each a full min over the impulse set applied to the current
working values).  The terminal slice is the terminal cost closed under
profitable jump chains, mirroring the solve-side terminal convention;
with ``max_jumps = 0`` the induction is the plain no-impulse value with
the raw terminal cost.

Single-threaded and unoptimised by design; never run it on fine grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ProblemError, ProblemSpec

__all__ = ["OracleSettings", "OracleField", "oracle_field", "oracle_value"]


@dataclass(frozen=True)
class OracleSettings:
    spacing: float       # lattice spacing h, shared by all axes
    steps: int           # number of backward time steps
    max_jumps: int = 2   # jump compositions allowed per interior time node

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("lattice spacing must be positive")
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if self.max_jumps < 0:
            raise ValueError("max_jumps must be >= 0")


@dataclass
class OracleField:
    lo: np.ndarray
    spacing: float
    counts: np.ndarray
    times: np.ndarray
    values: np.ndarray   # (steps + 1, n_nodes) flat row-major
    escaped: bool        # some displaced state left the box and was clamped

    def node_index(self, state) -> int:
        state = np.atleast_1d(np.asarray(state, dtype=np.float64))
        rel = (state - self.lo) / self.spacing
        idx = np.rint(rel).astype(np.int64)
        if np.any(np.abs(rel - idx) > 1e-9):
            raise ProblemError(f"query state {state.tolist()} is not on the lattice")
        if np.any(idx < 0) or np.any(idx >= self.counts):
            raise ProblemError(f"query state {state.tolist()} is outside the box")
        strides = _strides(self.counts)
        return int(np.sum(idx * strides))


def _strides(counts: np.ndarray) -> np.ndarray:
    strides = np.ones(len(counts), dtype=np.int64)
    for a in range(len(counts) - 2, -1, -1):
        strides[a] = strides[a + 1] * counts[a + 1]
    return strides


def _build_lattice(box: np.ndarray, h: float):
    lo, hi = box[:, 0], box[:, 1]
    span = (hi - lo) / h
    counts = np.rint(span).astype(np.int64) + 1
    if np.any(np.abs(span - (counts - 1)) > 1e-9):
        raise ProblemError("box width must be an integer multiple of the spacing")
    axes = [lo[a] + h * np.arange(counts[a]) for a in range(len(lo))]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=-1)
    return lo, counts, nodes


class _Snapper:
    """Nearest-node projection with clamping; tracks whether it clamped."""

    def __init__(self, lo, counts):
        self.lo = lo
        self.counts = counts
        self.strides = _strides(counts)
        self.escaped = False

    def flat(self, states: np.ndarray, h: float) -> np.ndarray:
        rel = (states - self.lo) / h
        idx = np.rint(rel).astype(np.int64)
        clipped = np.clip(idx, 0, self.counts - 1)
        if np.any(clipped != idx):
            self.escaped = True
        return clipped @ self.strides


def _jump_pass(values, spec, t, nodes, snap, h):
    best = None
    for xi in spec.impulses:
        displaced = nodes + spec.jump(t, nodes, xi)
        cand = values[snap.flat(displaced, h)] + spec.jump_cost(t, nodes, xi)
        best = cand if best is None else np.minimum(best, cand)
    return best


def oracle_field(spec: ProblemSpec, box, settings: OracleSettings) -> OracleField:
    """Run the full backward induction and keep every time slice."""
    box = np.asarray(box, dtype=np.float64).reshape(spec.m, 2)
    h = settings.spacing
    lo, counts, nodes = _build_lattice(box, h)
    snap = _Snapper(lo, counts)
    n_nodes = nodes.shape[0]
    times = np.linspace(spec.t0, spec.horizon, settings.steps + 1)
    dt = (spec.horizon - spec.t0) / settings.steps

    values = np.empty((settings.steps + 1, n_nodes), dtype=np.float64)
    term = spec.terminal_cost(nodes)
    if settings.max_jumps >= 1:
        # close the terminal slice under jump chains (jumps at the horizon
        # still pay; strictly positive costs keep the loop finite)
        for _ in range(10000):
            new = np.minimum(term, _jump_pass(term, spec, spec.horizon, nodes, snap, h))
            if np.array_equal(new, term):
                break
            term = new
        else:
            raise ProblemError("terminal jump closure did not stabilise")
    values[settings.steps] = term

    for k in range(settings.steps - 1, -1, -1):
        t = float(times[k])
        cont = None
        for tau in spec.controls:
            displaced = nodes + dt * spec.drift(t, nodes, tau)
            cand = spec.running(t, nodes, tau) * dt + values[k + 1][snap.flat(displaced, h)]
            cont = cand if cont is None else np.maximum(cont, cand)
        work = cont
        for _ in range(settings.max_jumps):
            work = np.minimum(work, _jump_pass(work, spec, t, nodes, snap, h))
        values[k] = work

    return OracleField(
        lo=lo, spacing=h, counts=counts, times=times, values=values,
        escaped=snap.escaped,
    )


def oracle_value(spec: ProblemSpec, box, settings: OracleSettings, query) -> float:
    """Value at ``query = (time_index, state)``; the state must be on-lattice."""
    k, state = query
    fieldv = oracle_field(spec, box, settings)
    if not 0 <= k <= settings.steps:
        raise ProblemError(f"time index {k} out of range [0, {settings.steps}]")
    return float(fieldv.values[k][fieldv.node_index(state)])
