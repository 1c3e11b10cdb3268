"""Sectioned plain-text problem files.

The on-disk format is deliberately flat so that diffs and golden tests
stay readable: INI-style sections with ``key = value`` lines and ``#``
comments.  Required sections are ``[meta]``, ``[controls]``,
``[impulses]``, ``[dynamics]``, ``[jumps]`` and ``[costs]``; optional
``[grid]`` and ``[solver]`` sections carry the default discretisation
and solver settings for the CLI.

Example::

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

    [solver]
    fp_tol = 1e-9
    max_sweeps = 50
    wn_tol = 1e-6
    n_max = 32
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

__all__ = ["ProblemFileError", "GridSection", "SolverSection", "parse_sections",
           "parse_vector", "grid_section", "solver_section"]


class ProblemFileError(Exception):
    """Malformed problem file; carries the offending section/key."""

    def __init__(self, message: str, section: str | None = None, key: str | None = None):
        where = ""
        if section is not None:
            where = f"[{section}]"
            if key is not None:
                where += f" {key}"
            where += ": "
        super().__init__(where + message)
        self.section = section
        self.key = key


@dataclass(frozen=True)
class GridSection:
    axes: tuple[tuple[float, float, int], ...]  # (lo, hi, nodes) per state axis
    time_steps: int


@dataclass(frozen=True)
class SolverSection:
    fp_tol: float | None = None
    max_sweeps: int | None = None
    wn_tol: float | None = None
    n_max: int | None = None


def parse_sections(text: str) -> dict[str, dict[str, str]]:
    """Parse the raw file into an ordered section -> key -> value map."""
    cp = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",),
        strict=True,
    )
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ProblemFileError(f"cannot parse problem file: {exc}") from exc
    return {name: dict(cp[name]) for name in cp.sections()}


def parse_vector(value: str, section: str, key: str) -> np.ndarray:
    parts = value.replace(",", " ").split()
    if not parts:
        raise ProblemFileError("empty vector", section, key)
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise ProblemFileError(f"not a numeric vector: {value!r}", section, key) from None


def _get_float(sections, section: str, key: str) -> float:
    try:
        raw = sections[section][key]
    except KeyError:
        raise ProblemFileError(f"missing required key '{key}'", section) from None
    try:
        return float(raw)
    except ValueError:
        raise ProblemFileError(f"not a number: {raw!r}", section, key) from None


def _get_int(sections, section: str, key: str) -> int:
    v = _get_float(sections, section, key)
    if v != int(v):
        raise ProblemFileError(f"expected an integer, got {v}", section, key)
    return int(v)


def grid_section(sections: dict, m: int) -> GridSection:
    """Extract the [grid] section; axes keys are x1..xm."""
    if "grid" not in sections:
        raise ProblemFileError("missing [grid] section")
    axes = []
    for a in range(1, m + 1):
        key = f"x{a}"
        if key not in sections["grid"]:
            raise ProblemFileError(f"missing axis '{key}'", "grid")
        vec = parse_vector(sections["grid"][key], "grid", key)
        if vec.shape[0] != 3:
            raise ProblemFileError("axis spec must be 'lo hi nodes'", "grid", key)
        lo, hi, n = float(vec[0]), float(vec[1]), int(vec[2])
        if n != vec[2]:
            raise ProblemFileError("node count must be an integer", "grid", key)
        axes.append((lo, hi, n))
    steps = _get_int(sections, "grid", "time_steps")
    return GridSection(tuple(axes), steps)


def solver_section(sections: dict) -> SolverSection:
    if "solver" not in sections:
        return SolverSection()
    sec = sections["solver"]
    kwargs = {}
    if "fp_tol" in sec:
        kwargs["fp_tol"] = _get_float(sections, "solver", "fp_tol")
    if "max_sweeps" in sec:
        kwargs["max_sweeps"] = _get_int(sections, "solver", "max_sweeps")
    if "wn_tol" in sec:
        kwargs["wn_tol"] = _get_float(sections, "solver", "wn_tol")
    if "n_max" in sec:
        kwargs["n_max"] = _get_int(sections, "solver", "n_max")
    return SolverSection(**kwargs)
