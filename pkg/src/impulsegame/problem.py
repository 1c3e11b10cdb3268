"""Game definitions: dynamics, jump map, costs and their validation.

A problem couples drift dynamics ``f(t, x, tau)`` driven by the
maximising player with an impulse control owned by the minimising
player: at chosen times the state jumps by ``g(t, x, xi)`` at a strictly
positive cost ``cost(t, x, xi)``.  Running reward ``psi`` accrues along
the trajectory and ``terminal`` is paid at the horizon.  Control and
impulse sets are finite lists of vectors; zero impulses are rejected
since a free no-op jump would break the strict-cost structure.

The standing regularity assumptions (Lipschitz drift and jump map,
linear growth, costs bounded below, strictly positive impulse cost)
cannot be proven from expression text, so :func:`validate` estimates
the relevant constants by seeded sampling and fails hard if it ever
sees a nonpositive impulse cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import probfile

__all__ = [
    "ProblemError",
    "NonpositiveCostError",
    "ProblemSpec",
    "ValidationReport",
    "load_problem",
    "validate",
    "builtin",
    "builtin_text",
    "BUILTIN_NAMES",
]


class ProblemError(Exception):
    pass


class NonpositiveCostError(ProblemError):
    """Sampled impulse cost <= 0; carries the witness point."""

    def __init__(self, value: float, t: float, x: np.ndarray, xi: np.ndarray):
        super().__init__(
            f"impulse cost must be > 0, found {value:g} at "
            f"t={t:g}, x={np.asarray(x).tolist()}, xi={np.asarray(xi).tolist()}"
        )
        self.value = value
        self.witness = (t, np.asarray(x), np.asarray(xi))


def state_vars(m: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(1, m + 1))


def control_vars(p: int) -> tuple[str, ...]:
    return tuple(f"tau{i}" for i in range(1, p + 1))


def impulse_vars(q: int) -> tuple[str, ...]:
    return tuple(f"xi{i}" for i in range(1, q + 1))


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable game description; safe to share across threads."""

    m: int
    t0: float
    horizon: float
    controls: np.ndarray  # (n_controls, p)
    impulses: np.ndarray  # (n_impulses, q)
    f: tuple[ex.ExprAst, ...]  # drift components, length m
    g: tuple[ex.ExprAst, ...]  # jump map components, length m
    psi: ex.ExprAst  # running reward over (t, x, tau)
    cost: ex.ExprAst  # impulse cost over (t, x, xi)
    terminal: ex.ExprAst  # terminal cost over x
    name: str = ""

    def __post_init__(self):
        if self.m < 1:
            raise ProblemError("state dimension m must be positive")
        if not self.t0 < self.horizon:
            raise ProblemError("need t0 < T")
        if self.controls.size == 0:
            raise ProblemError("control set K must be non-empty")
        if self.impulses.size == 0:
            raise ProblemError("impulse set E must be non-empty")
        if np.any(np.all(self.impulses == 0.0, axis=1)):
            raise ProblemError("impulse 0 not allowed in E")
        if len(self.f) != self.m:
            raise ProblemError(f"dynamics need {self.m} components, got {len(self.f)}")
        if len(self.g) != self.m:
            raise ProblemError(f"jump map needs {self.m} components, got {len(self.g)}")

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]

    @property
    def n_impulses(self) -> int:
        return self.impulses.shape[0]

    # -- vectorised problem data over a batch of states ----------------

    def _env(self, t: float, x: np.ndarray, extra: dict | None = None) -> dict:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        env = {"t": t}
        for i, name in enumerate(state_vars(self.m)):
            env[name] = x[:, i]
        if extra:
            env.update(extra)
        return env

    def drift(self, t: float, x: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """f(t, x, tau) for every row of x; shape (n, m)."""
        extra = dict(zip(control_vars(tau.shape[0]), tau))
        env = self._env(t, x, extra)
        return _eval_components(self.f, env, np.atleast_2d(x).shape[0])

    def jump(self, t: float, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """g(t, x, xi) for every row of x; shape (n, m)."""
        extra = dict(zip(impulse_vars(xi.shape[0]), xi))
        env = self._env(t, x, extra)
        return _eval_components(self.g, env, np.atleast_2d(x).shape[0])

    def running(self, t: float, x: np.ndarray, tau: np.ndarray) -> np.ndarray:
        extra = dict(zip(control_vars(tau.shape[0]), tau))
        out = ex.evaluate_array(self.psi, self._env(t, x, extra))
        return np.broadcast_to(out, (np.atleast_2d(x).shape[0],)).astype(np.float64)

    def jump_cost(self, t: float, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        extra = dict(zip(impulse_vars(xi.shape[0]), xi))
        out = ex.evaluate_array(self.cost, self._env(t, x, extra))
        return np.broadcast_to(out, (np.atleast_2d(x).shape[0],)).astype(np.float64)

    def terminal_cost(self, x: np.ndarray) -> np.ndarray:
        out = ex.evaluate_array(self.terminal, self._env(0.0, x))
        return np.broadcast_to(out, (np.atleast_2d(x).shape[0],)).astype(np.float64)


def _eval_components(exprs, env: dict, n: int) -> np.ndarray:
    cols = [
        np.broadcast_to(ex.evaluate_array(e, env), (n,)).astype(np.float64)
        for e in exprs
    ]
    return np.stack(cols, axis=-1)


def load_problem(text: str, name: str = "") -> ProblemSpec:
    """Build a :class:`ProblemSpec` from problem-file text."""
    sections = probfile.parse_sections(text)
    for required in ("meta", "controls", "impulses", "dynamics", "jumps", "costs"):
        if required not in sections:
            raise probfile.ProblemFileError(f"missing [{required}] section")

    m = _meta_int(sections, "m")
    t0 = _meta_float(sections, "t0")
    horizon = _meta_float(sections, "T")
    if not t0 < horizon:
        raise probfile.ProblemFileError("need t0 < T", "meta")

    controls = _vector_list(sections, "controls")
    impulses = _vector_list(sections, "impulses")
    p = controls.shape[1]
    q = impulses.shape[1]

    xs = state_vars(m)
    f = tuple(
        _parse_expr(sections, "dynamics", f"f{i}", ("t", *xs, *control_vars(p)))
        for i in range(1, m + 1)
    )
    _reject_extra_keys(sections, "dynamics", {f"f{i}" for i in range(1, m + 1)})
    g = tuple(
        _parse_expr(sections, "jumps", f"g{i}", ("t", *xs, *impulse_vars(q)))
        for i in range(1, m + 1)
    )
    _reject_extra_keys(sections, "jumps", {f"g{i}" for i in range(1, m + 1)})

    psi = _parse_expr(sections, "costs", "psi", ("t", *xs, *control_vars(p)))
    cost = _parse_expr(sections, "costs", "impulse_cost", ("t", *xs, *impulse_vars(q)))
    terminal = _parse_expr(sections, "costs", "terminal", xs)

    try:
        return ProblemSpec(
            m=m, t0=t0, horizon=horizon, controls=controls, impulses=impulses,
            f=f, g=g, psi=psi, cost=cost, terminal=terminal, name=name,
        )
    except ProblemError as exc:
        raise probfile.ProblemFileError(str(exc)) from exc


def _meta_int(sections, key: str) -> int:
    try:
        return int(sections["meta"][key])
    except KeyError:
        raise probfile.ProblemFileError(f"missing required key '{key}'", "meta") from None
    except ValueError:
        raise probfile.ProblemFileError(
            f"not an integer: {sections['meta'][key]!r}", "meta", key
        ) from None


def _meta_float(sections, key: str) -> float:
    try:
        return float(sections["meta"][key])
    except KeyError:
        raise probfile.ProblemFileError(f"missing required key '{key}'", "meta") from None
    except ValueError:
        raise probfile.ProblemFileError(
            f"not a number: {sections['meta'][key]!r}", "meta", key
        ) from None


def _vector_list(sections, section: str) -> np.ndarray:
    items = sections[section]
    if not items:
        raise probfile.ProblemFileError("must list at least one vector", section)
    rows = [probfile.parse_vector(v, section, k) for k, v in items.items()]
    arity = rows[0].shape[0]
    for (key, _), row in zip(items.items(), rows):
        if row.shape[0] != arity:
            raise probfile.ProblemFileError(
                f"inconsistent vector arity ({row.shape[0]} vs {arity})", section, key
            )
    return np.stack(rows)


def _parse_expr(sections, section: str, key: str, allowed) -> ex.ExprAst:
    try:
        source = sections[section][key]
    except KeyError:
        raise probfile.ProblemFileError(f"missing required key '{key}'", section) from None
    try:
        return ex.parse(source, allowed)
    except ex.ExprError as exc:
        raise probfile.ProblemFileError(str(exc), section, key) from exc


def _reject_extra_keys(sections, section: str, allowed: set):
    extra = set(sections[section]) - allowed
    if extra:
        raise probfile.ProblemFileError(
            f"unexpected keys {sorted(extra)}", section
        )


# -- assumption checking by sampling -----------------------------------


@dataclass(frozen=True)
class ValidationReport:
    """Sampled estimates of the regularity constants of a problem."""

    est_lipschitz_f: float
    est_lipschitz_g: float
    est_growth_f: float
    est_growth_g: float
    est_growth_psi: float
    est_growth_G: float
    psi_lower: float
    G_lower: float
    cost_min: float
    samples: int

    def lipschitz(self) -> float:
        return max(self.est_lipschitz_f, self.est_lipschitz_g)

    def lower_bound(self, t0: float, horizon: float) -> float:
        """Constant lower bound on the value over [t0, T]."""
        return (horizon - t0) * min(0.0, self.psi_lower) + self.G_lower

    def growth_bound(self, t0: float, horizon: float) -> float:
        """Coefficient C with value <= C * (1 + |x|), Gronwall style."""
        span = horizon - t0
        return (self.est_growth_psi * span + self.est_growth_G) * math.exp(
            self.est_growth_f * span
        )


def _sample_states(bounds: np.ndarray, samples: int, rng) -> np.ndarray:
    """Random states plus a deterministic sweep (axis lines, corners, center)."""
    m = bounds.shape[0]
    lo, hi = bounds[:, 0], bounds[:, 1]
    pts = [rng.uniform(lo, hi, size=(samples, m))]
    mid = 0.5 * (lo + hi)
    sweep_n = min(max(samples, 3), 101) | 1  # odd, so the midpoint is hit exactly
    for a in range(m):
        line = np.tile(mid, (sweep_n, 1))
        line[:, a] = np.linspace(lo[a], hi[a], sweep_n)
        pts.append(line)
    corners = np.stack(np.meshgrid(*bounds, indexing="ij"), axis=-1).reshape(-1, m)
    pts.append(corners)
    pts.append(mid[None, :])
    return np.concatenate(pts, axis=0)


def validate(spec: ProblemSpec, bounds, samples: int = 1000, seed: int = 0) -> ValidationReport:
    """Estimate regularity constants on a box by seeded sampling.

    Raises :class:`NonpositiveCostError` if any sampled impulse cost is
    not strictly positive.
    """
    if samples < 2:
        raise ProblemError("need samples >= 2")
    bounds = np.asarray(bounds, dtype=np.float64).reshape(spec.m, 2)
    rng = np.random.default_rng(seed)

    x = _sample_states(bounds, samples, rng)
    n = x.shape[0]
    x_alt = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, spec.m))
    ts = rng.uniform(spec.t0, spec.horizon, size=n)
    ts[0] = spec.t0
    ts[-1] = spec.horizon

    one_plus = 1.0 + np.linalg.norm(x, axis=1)
    dx = np.linalg.norm(x - x_alt, axis=1)
    ok = dx > 1e-12

    probe_times = (spec.t0, spec.horizon, *(float(t) for t in ts[:3]))

    lip_f = growth_f = 0.0
    psi_lo = np.inf
    growth_psi = 0.0
    for tau in spec.controls:
        for t in probe_times:
            fv = spec.drift(t, x, tau)
            fv_alt = spec.drift(t, x_alt, tau)
            growth_f = max(growth_f, float(np.max(np.linalg.norm(fv, axis=1) / one_plus)))
            if np.any(ok):
                quot = np.linalg.norm(fv[ok] - fv_alt[ok], axis=1) / dx[ok]
                lip_f = max(lip_f, float(np.max(quot)))
            pv = spec.running(t, x, tau)
            psi_lo = min(psi_lo, float(np.min(pv)))
            growth_psi = max(growth_psi, float(np.max(np.abs(pv) / one_plus)))

    lip_g = growth_g = 0.0
    cost_min = np.inf
    witness = None
    for xi in spec.impulses:
        for t in probe_times:
            gv = spec.jump(t, x, xi)
            gv_alt = spec.jump(t, x_alt, xi)
            growth_g = max(growth_g, float(np.max(np.linalg.norm(gv, axis=1) / one_plus)))
            if np.any(ok):
                quot = np.linalg.norm(gv[ok] - gv_alt[ok], axis=1) / dx[ok]
                lip_g = max(lip_g, float(np.max(quot)))
        # impulse cost sampled at random times as well as the endpoints
        for t in np.concatenate(([spec.t0, spec.horizon], ts[: min(n, 64)])):
            cv = spec.jump_cost(float(t), x, xi)
            j = int(np.argmin(cv))
            if cv[j] < cost_min:
                cost_min = float(cv[j])
                witness = (float(t), x[j], xi)

    gv_term = spec.terminal_cost(x)
    g_lower = float(np.min(gv_term))
    growth_term = float(np.max(np.abs(gv_term) / one_plus))

    if cost_min <= 0.0:
        t_w, x_w, xi_w = witness
        raise NonpositiveCostError(cost_min, t_w, x_w, xi_w)

    report = ValidationReport(
        est_lipschitz_f=lip_f,
        est_lipschitz_g=lip_g,
        est_growth_f=growth_f,
        est_growth_g=growth_g,
        est_growth_psi=growth_psi,
        est_growth_G=growth_term,
        psi_lower=psi_lo,
        G_lower=g_lower,
        cost_min=cost_min,
        samples=n,
    )
    for name, value in report.__dict__.items():
        if name != "samples" and not np.isfinite(value):
            raise ProblemError(f"validation estimate {name} is not finite")
    return report


# -- builtin catalog ----------------------------------------------------

_DG1 = """\
[meta]
m = 1
t0 = 0.0
T = 1.0

[controls]
k1 = -1
k2 = 1

[impulses]
e1 = -2

[dynamics]
f1 = tau1

[jumps]
g1 = xi1

[costs]
psi = 0
impulse_cost = 0.1
terminal = abs(x1)

[grid]
x1 = -6 6 241
time_steps = 100
"""

_DG1_RICH_CONTROLS = "\n".join(
    f"k{i + 1} = {(-1.0 + 0.1 * i):.1f}" for i in range(21)
)

_DG1_RICH = f"""\
[meta]
m = 1
t0 = 0.0
T = 1.0

[controls]
{_DG1_RICH_CONTROLS}

[impulses]
e1 = -2
e2 = -1
e3 = 1
e4 = 2

[dynamics]
f1 = tau1

[jumps]
g1 = xi1

[costs]
psi = 0
impulse_cost = 0.1
terminal = abs(x1)

[grid]
x1 = -6 6 241
time_steps = 100
"""

_TXCOST = """\
[meta]
m = 1
t0 = 0.0
T = 1.0

[controls]
k1 = 0
k2 = 0.05

[impulses]
e1 = -0.5
e2 = 0.5

[dynamics]
f1 = tau1 * x1

[jumps]
g1 = xi1

[costs]
psi = 0
impulse_cost = 0.05 + 0.01 * abs(xi1)
terminal = abs(x1 - 1)

[grid]
x1 = -2 4 241
time_steps = 100
"""

_BUILTIN_TEXT = {"dg1": _DG1, "dg1-rich": _DG1_RICH, "txcost": _TXCOST}
BUILTIN_NAMES = tuple(sorted(_BUILTIN_TEXT))


def builtin_text(name: str) -> str:
    """Problem-file text of a catalog problem."""
    try:
        return _BUILTIN_TEXT[name]
    except KeyError:
        raise ProblemError(
            f"unknown catalog problem {name!r}; choose from {', '.join(BUILTIN_NAMES)}"
        ) from None


def builtin(name: str) -> ProblemSpec:
    """Catalog problem by name: 'dg1', 'dg1-rich' or 'txcost'."""
    return load_problem(builtin_text(name), name=name)
