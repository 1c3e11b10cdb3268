"""Field, trajectory and manifest exports.

CSV is the interchange contract: header comments carry the exact grid
and mesh geometry, then one row per (time node, grid node) in row-major
order.  Floats are written with ``repr``, the shortest digit string
that round-trips, so export -> import -> export is byte identical.

The SVG export is a dependency-free heatmap of the value field over
(t, x1) for one-dimensional problems (or over (x1, x2) at a fixed time
slice for two-dimensional ones), with the obstacle-binding region
outlined and a value legend.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .grid import Grid, TimeMesh, ValueField

__all__ = [
    "ExportError",
    "write_field_csv",
    "read_field_csv",
    "write_trajectory_csv",
    "write_manifest",
    "file_sha256",
    "svg_heatmap",
]


class ExportError(Exception):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def write_field_csv(path, fieldv: ValueField, problem: str = "", scheme: str = "") -> None:
    grid, mesh = fieldv.grid, fieldv.mesh
    lines = ["# impulsegame field export v1"]
    if problem:
        lines.append(f"# problem: {problem}")
    if scheme:
        lines.append(f"# scheme: {scheme}")
    for a in range(grid.ndim):
        lines.append(
            f"# grid: x{a + 1} {_fmt(grid.lo[a])} {_fmt(grid.hi[a])} {int(grid.counts[a])}"
        )
    lines.append(f"# mesh: {_fmt(mesh.t0)} {_fmt(mesh.t_end)} {mesh.steps}")
    cols = ",".join(f"x{a + 1}" for a in range(grid.ndim))
    lines.append(f"t,{cols},value")
    pts = grid.nodes
    for k in range(mesh.steps + 1):
        t_str = _fmt(mesh.time(k))
        vals = fieldv.values[k]
        for i in range(grid.n_nodes):
            coords = ",".join(_fmt(c) for c in pts[i])
            lines.append(f"{t_str},{coords},{_fmt(vals[i])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path) -> tuple[ValueField, dict]:
    """Rebuild a field from an export; values round-trip bit exactly."""
    meta: dict = {"axes": []}
    values: list[float] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ExportError(f"cannot read field export: {exc}") from exc
    header_done = False
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("grid:"):
                parts = body[len("grid:"):].split()
                if len(parts) != 4:
                    raise ExportError(f"malformed grid header: {line!r}")
                meta["axes"].append((float(parts[1]), float(parts[2]), int(parts[3])))
            elif body.startswith("mesh:"):
                parts = body[len("mesh:"):].split()
                if len(parts) != 3:
                    raise ExportError(f"malformed mesh header: {line!r}")
                meta["mesh"] = (float(parts[0]), float(parts[1]), int(parts[2]))
            elif body.startswith("problem:"):
                meta["problem"] = body[len("problem:"):].strip()
            elif body.startswith("scheme:"):
                meta["scheme"] = body[len("scheme:"):].strip()
            continue
        if not header_done:
            header_done = True  # column header row
            continue
        values.append(float(line.rsplit(",", 1)[1]))
    if not meta["axes"] or "mesh" not in meta:
        raise ExportError("missing grid/mesh headers in field export")
    grid = Grid(
        [a[0] for a in meta["axes"]],
        [a[1] for a in meta["axes"]],
        [a[2] for a in meta["axes"]],
    )
    t0, t_end, steps = meta["mesh"]
    mesh = TimeMesh(t0, t_end, steps)
    expected = (steps + 1) * grid.n_nodes
    if len(values) != expected:
        raise ExportError(f"expected {expected} value rows, found {len(values)}")
    arr = np.array(values, dtype=np.float64).reshape(steps + 1, grid.n_nodes)
    return ValueField(grid, mesh, arr), meta


def write_trajectory_csv(path, traj, ndim: int) -> None:
    lines = ["# impulsegame trajectory export v1"]
    cols = ",".join(f"x{a + 1}" for a in range(ndim))
    lines.append(f"t,{cols},decision,step_cost,cumulative")
    cumulative = 0.0
    for i in range(traj.times.shape[0]):
        cumulative += float(traj.step_costs[i]) if i < len(traj.step_costs) else 0.0
        coords = ",".join(_fmt(c) for c in np.atleast_1d(traj.states[i]))
        decision = traj.decisions[i] if i < len(traj.decisions) else ""
        lines.append(
            f"{_fmt(traj.times[i])},{coords},\"{decision}\","
            f"{_fmt(traj.step_costs[i]) if i < len(traj.step_costs) else ''},"
            f"{_fmt(cumulative)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- SVG heatmap ----------------------------------------------------------

_STOPS = (
    (0.0, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.5, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.0, (253, 231, 37)),
)


def _color(u: float) -> str:
    u = min(max(u, 0.0), 1.0)
    for (u0, c0), (u1, c1) in zip(_STOPS, _STOPS[1:]):
        if u <= u1:
            w = 0.0 if u1 == u0 else (u - u0) / (u1 - u0)
            rgb = tuple(int(round(a + w * (b - a))) for a, b in zip(c0, c1))
            return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"
    return "rgb(253,231,37)"


def svg_heatmap(
    path,
    fieldv: ValueField,
    binding: np.ndarray,
    title: str = "",
    time_index: int | None = None,
) -> None:
    """Write a heatmap SVG; ``binding`` flags obstacle-active nodes.

    One-dimensional fields are drawn over (t, x1) using every time
    slice; two-dimensional fields need ``time_index`` and are drawn over
    (x1, x2) at that slice.
    """
    grid, mesh = fieldv.grid, fieldv.mesh
    if grid.ndim == 1:
        data = fieldv.values.T  # rows: x nodes, cols: time nodes
        mask = binding.T
        n_rows, n_cols = data.shape
        x_label, y_label = "t", "x1"
        x_lo, x_hi = mesh.t0, mesh.t_end
        y_lo, y_hi = float(grid.lo[0]), float(grid.hi[0])
    elif grid.ndim == 2:
        if time_index is None:
            raise ExportError("two-dimensional fields need a --slice time")
        shape = tuple(int(c) for c in grid.counts)
        data = fieldv.values[time_index].reshape(shape).T
        mask = binding[time_index].reshape(shape).T
        n_rows, n_cols = data.shape
        x_label, y_label = "x1", "x2"
        x_lo, x_hi = float(grid.lo[0]), float(grid.hi[0])
        y_lo, y_hi = float(grid.lo[1]), float(grid.hi[1])
    else:
        raise ExportError("SVG export supports one- and two-dimensional problems only")

    vmin = float(np.min(data))
    vmax = float(np.max(data))
    span = vmax - vmin if vmax > vmin else 1.0

    margin_l, margin_b, margin_t, margin_r = 60, 40, 30, 90
    plot_w, plot_h = 640, 420
    cw = plot_w / n_cols
    ch = plot_h / n_rows
    width = margin_l + plot_w + margin_r
    height = margin_t + plot_h + margin_b

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{margin_l}" y="20" font-family="monospace" font-size="14">{title}</text>'
        )
    for r in range(n_rows):
        # row 0 is the lowest coordinate; SVG y grows downward
        y = margin_t + plot_h - (r + 1) * ch
        for c in range(n_cols):
            x = margin_l + c * cw
            col = _color((float(data[r, c]) - vmin) / span)
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.5:.2f}" '
                f'height="{ch + 0.5:.2f}" fill="{col}"/>'
            )
    # outline the obstacle-binding region
    for r in range(n_rows):
        y = margin_t + plot_h - (r + 1) * ch
        for c in range(n_cols):
            if mask[r, c]:
                x = margin_l + c * cw
                parts.append(
                    f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" '
                    f'fill="none" stroke="red" stroke-width="0.6"/>'
                )
    # axes labels
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.0f}" y="{height - 10}" font-family="monospace" '
        f'font-size="12">{x_label}: {x_lo:g} .. {x_hi:g}</text>'
    )
    parts.append(
        f'<text x="10" y="{margin_t + plot_h / 2:.0f}" font-family="monospace" '
        f'font-size="12" transform="rotate(-90 14 {margin_t + plot_h / 2:.0f})">'
        f"{y_label}: {y_lo:g} .. {y_hi:g}</text>"
    )
    # legend: vertical gradient with min/max labels plus binding key
    lx = margin_l + plot_w + 20
    steps = 24
    lh = plot_h / steps
    for s in range(steps):
        u = 1.0 - s / (steps - 1)
        parts.append(
            f'<rect x="{lx}" y="{margin_t + s * lh:.2f}" width="16" height="{lh + 0.5:.2f}" '
            f'fill="{_color(u)}"/>'
        )
    parts.append(
        f'<text x="{lx + 20}" y="{margin_t + 10}" font-family="monospace" font-size="11">'
        f"{vmax:.4g}</text>"
    )
    parts.append(
        f'<text x="{lx + 20}" y="{margin_t + plot_h}" font-family="monospace" font-size="11">'
        f"{vmin:.4g}</text>"
    )
    parts.append(
        f'<rect x="{lx}" y="{margin_t + plot_h + 12}" width="16" height="10" fill="none" '
        f'stroke="red" stroke-width="1"/>'
    )
    parts.append(
        f'<text x="{lx + 20}" y="{margin_t + plot_h + 21}" font-family="monospace" '
        f'font-size="11">obstacle binds</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
