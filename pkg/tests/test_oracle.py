import numpy as np
import pytest

from impulsegame.oracle import OracleSettings, oracle_field, oracle_value
from impulsegame.problem import ProblemError, builtin, load_problem

BOX = [(-6.0, 6.0)]

STATIC = """\
[meta]
m = 1
t0 = 0.0
T = 1.0

[controls]
k1 = 0

[impulses]
e1 = -2

[dynamics]
f1 = 0

[jumps]
g1 = xi1

[costs]
psi = 0
impulse_cost = 0.1
terminal = abs(x1)
"""


def test_settings_validation():
    with pytest.raises(ValueError):
        OracleSettings(spacing=0.0, steps=4)
    with pytest.raises(ValueError):
        OracleSettings(spacing=0.5, steps=0)
    with pytest.raises(ValueError):
        OracleSettings(spacing=0.5, steps=4, max_jumps=-1)


def test_box_must_match_spacing():
    spec = builtin("dg1")
    with pytest.raises(ProblemError, match="multiple of the spacing"):
        oracle_field(spec, [(-6.0, 6.0)], OracleSettings(spacing=0.7, steps=4))


def test_query_must_be_on_lattice():
    spec = builtin("dg1")
    settings = OracleSettings(spacing=0.5, steps=4)
    with pytest.raises(ProblemError, match="not on the lattice"):
        oracle_value(spec, BOX, settings, (0, [0.3]))
    with pytest.raises(ProblemError, match="outside the box"):
        oracle_value(spec, BOX, settings, (0, [7.0]))


def test_frozen_dynamics_equal_terminal_everywhere():
    spec = load_problem(STATIC)
    settings = OracleSettings(spacing=0.25, steps=8, max_jumps=2)
    fieldv = oracle_field(spec, BOX, settings)
    for k in range(settings.steps):
        assert np.array_equal(fieldv.values[k], fieldv.values[settings.steps])


def test_no_jump_cap_equals_plain_induction():
    """max_jumps = 0 reproduces an independent no-impulse induction exactly."""
    spec = builtin("dg1")
    settings = OracleSettings(spacing=0.25, steps=8, max_jumps=0)
    fieldv = oracle_field(spec, BOX, settings)

    # independent re-derivation with plain loops and nearest-node snapping
    xs = -6.0 + 0.25 * np.arange(49)
    dt = 1.0 / 8
    v = np.abs(xs)
    slices = [v]
    for k in range(7, -1, -1):
        new = np.empty_like(v)
        for i, x in enumerate(xs):
            best = -np.inf
            for tau in (-1.0, 1.0):
                j = int(np.rint((x + tau * dt + 6.0) / 0.25))
                j = min(max(j, 0), 48)
                best = max(best, v[j])
            new[i] = best
        slices.append(new)
        v = new
    expected = np.stack(slices[::-1])
    assert np.array_equal(fieldv.values, expected)


def test_huge_cost_matches_no_jump_cap():
    text = STATIC.replace("impulse_cost = 0.1", "impulse_cost = 1000").replace(
        "f1 = 0", "f1 = tau1").replace("k1 = 0", "k1 = -1\nk2 = 1")
    spec = load_problem(text)
    with_jumps = oracle_field(spec, BOX, OracleSettings(0.25, 8, max_jumps=2))
    without = oracle_field(spec, BOX, OracleSettings(0.25, 8, max_jumps=0))
    assert np.array_equal(with_jumps.values, without.values)


def test_monotone_in_impulse_cost():
    cheap = builtin("dg1")
    costly = load_problem(
        STATIC.replace("impulse_cost = 0.1", "impulse_cost = 0.2").replace(
            "f1 = 0", "f1 = tau1").replace("k1 = 0", "k1 = -1\nk2 = 1")
    )
    settings = OracleSettings(0.25, 8, max_jumps=2)
    a = oracle_field(cheap, BOX, settings)
    b = oracle_field(costly, BOX, settings)
    assert np.all(b.values >= a.values - 1e-12)


def test_dg1_coarse_frozen_values():
    spec = builtin("dg1")
    settings = OracleSettings(spacing=0.25, steps=8, max_jumps=2)
    assert oracle_value(spec, BOX, settings, (0, [3.0])) == pytest.approx(1.1, abs=1e-12)
    # terminal slice carries the jump-chain closure
    assert oracle_value(spec, BOX, settings, (8, [4.0])) == pytest.approx(0.2, abs=1e-12)
    assert oracle_value(spec, BOX, settings, (8, [3.0])) == pytest.approx(1.1, abs=1e-12)


def test_deeper_jump_budget_changes_nothing_on_catalog():
    spec = builtin("dg1")
    a = oracle_field(spec, BOX, OracleSettings(0.25, 8, max_jumps=2))
    b = oracle_field(spec, BOX, OracleSettings(0.25, 8, max_jumps=3))
    assert np.array_equal(a.values, b.values)


def test_escape_flagged():
    spec = builtin("dg1")
    fieldv = oracle_field(spec, BOX, OracleSettings(0.25, 8, max_jumps=2))
    assert fieldv.escaped  # drift and jumps push boundary states outside
