"""Command line interface: solve, check, export, oracle, simulate.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 invariant
failure.  Every solve writes the value field CSV, a solver report and a
run manifest (resolved settings, input hash, tool version, timings) to
the output directory, which defaults to ``$IMPULSEGAME_OUT`` or the
current directory.  Results are independent of ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, checks, exports, kernels, probfile
from .expr import ExprError
from .grid import Grid, TimeMesh
from .impulse import best_jump_grid
from .oracle import OracleSettings, oracle_field
from .policy import extract_policy, simulate
from .problem import ProblemError, load_problem, validate
from .probfile import ProblemFileError
from .solver import (
    ConvergenceError,
    SolveSettings,
    SolverError,
    cfl_ratio,
    solve_qvi,
    solve_qvi_scaled,
    solve_stopping_iterates,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2
EXIT_CHECK_FAILED = 3

OUT_ENV_VAR = "IMPULSEGAME_OUT"


def _out_dir(flag_value: str | None) -> Path:
    out = Path(flag_value or os.environ.get(OUT_ENV_VAR) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read problem file: {exc}") from exc
    spec = load_problem(text, name=Path(path).stem)
    sections = probfile.parse_sections(text)
    gsec = probfile.grid_section(sections, spec.m)
    grid = Grid([a[0] for a in gsec.axes], [a[1] for a in gsec.axes],
                [a[2] for a in gsec.axes])
    mesh = TimeMesh(spec.t0, spec.horizon, gsec.time_steps)
    ssec = probfile.solver_section(sections)
    defaults = SolveSettings()
    settings = SolveSettings(
        fp_tol=ssec.fp_tol if ssec.fp_tol is not None else defaults.fp_tol,
        max_sweeps=ssec.max_sweeps if ssec.max_sweeps is not None else defaults.max_sweeps,
        wn_tol=ssec.wn_tol if ssec.wn_tol is not None else defaults.wn_tol,
        n_max=ssec.n_max if ssec.n_max is not None else defaults.n_max,
    )
    return text, spec, grid, mesh, settings


def _warn_cfl(spec, grid, mesh):
    ratio = cfl_ratio(spec, grid, mesh)
    if ratio > 1.0:
        print(
            f"warning: time step exceeds the CFL-like limit (ratio {ratio:.2f}); "
            "characteristics may overshoot a grid cell",
            file=sys.stderr,
        )


def _manifest(args, path: str, scheme: str, grid, mesh, settings, extra: dict) -> dict:
    payload = {
        "tool": "impulsegame",
        "version": __version__,
        "command": " ".join(sys.argv[1:]) if sys.argv else "",
        "input": str(path),
        "input_sha256": exports.file_sha256(path),
        "scheme": scheme,
        "backend": kernels.active_backend(),
        "threads": getattr(args, "threads", None),
        "grid": [
            {"axis": f"x{a + 1}", "lo": float(grid.lo[a]), "hi": float(grid.hi[a]),
             "nodes": int(grid.counts[a])}
            for a in range(grid.ndim)
        ],
        "mesh": {"t0": mesh.t0, "T": mesh.t_end, "steps": mesh.steps},
        "settings": asdict(settings),
    }
    payload.update(extra)
    return payload


def cmd_solve(args) -> int:
    text, spec, grid, mesh, settings = _load_inputs(args.file)
    _warn_cfl(spec, grid, mesh)
    out = _out_dir(args.out)
    started = time.perf_counter()
    if args.scheme == "qvi":
        fieldv, report = solve_qvi(spec, grid, mesh, settings)
    elif args.scheme == "gamma":
        fieldv, report = solve_qvi_scaled(spec, grid, mesh, settings)
    else:
        iterates, report = solve_stopping_iterates(spec, grid, mesh, settings)
        fieldv = iterates[-1]
    wall = time.perf_counter() - started

    value_path = out / "value.csv"
    exports.write_field_csv(value_path, fieldv, problem=spec.name, scheme=args.scheme)
    report_payload = {
        "scheme": report.scheme,
        "iterations": report.iterations,
        "converged": report.converged,
        "deltas": report.deltas,
        "sweeps_max": report.sweeps_max,
        "wall_time_s": report.wall_time_s,
        "notes": report.notes,
        "residual": asdict(report.residual) if report.residual else None,
    }
    (out / "report.json").write_text(json.dumps(report_payload, indent=2) + "\n")
    manifest = _manifest(
        args, args.file, args.scheme, grid, mesh, settings,
        {
            "wall_time_s": wall,
            "convergence": {
                "iterations": report.iterations,
                "converged": report.converged,
                "notes": report.notes,
            },
            "files": ["value.csv", "report.json"],
        },
    )
    exports.write_manifest(out / "manifest.json", manifest)
    if report.notes:
        print(f"note: {report.notes}")
    print(f"wrote {value_path}")
    return EXIT_OK


def cmd_check(args) -> int:
    text, spec, grid, mesh, settings = _load_inputs(args.file)
    if args.field:
        fieldv, _meta = exports.read_field_csv(args.field)
        rows = checks.run_field_checks(spec, fieldv, settings)
    else:
        _warn_cfl(spec, grid, mesh)
        rows = checks.run_checks(spec, grid, mesh, settings, level=args.level)
    for row in rows:
        print(row.line())
    failed = [r for r in rows if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(rows)} checks failed", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"all {len(rows)} checks passed")
    return EXIT_OK


def cmd_export(args) -> int:
    text, spec, grid, mesh, settings = _load_inputs(args.file)
    fieldv, meta = exports.read_field_csv(args.field)
    out = _out_dir(args.out)

    time_index = None
    if args.slice is not None:
        if not args.slice.startswith("t="):
            raise ProblemFileError("--slice expects the form t=VALUE")
        t_val = float(args.slice[2:])
        fm = fieldv.mesh
        if not (fm.t0 - 1e-12 <= t_val <= fm.t_end + 1e-12):
            raise ProblemFileError(
                f"slice out of range: t={t_val:g} not in [{fm.t0:g}, {fm.t_end:g}]"
            )
        time_index = int(round((t_val - fm.t0) / fm.dt))

    written = []
    csv_path = out / "value.csv"
    exports.write_field_csv(
        csv_path, fieldv, problem=meta.get("problem", spec.name),
        scheme=meta.get("scheme", ""),
    )
    written.append(csv_path)

    if time_index is not None:
        # single-slice CSV alongside the full export
        slice_path = out / f"slice_t{time_index}.csv"
        sub = fieldv.values[time_index]
        pts = fieldv.grid.nodes
        cols = ",".join(f"x{a + 1}" for a in range(fieldv.grid.ndim))
        lines = [f"# slice at t = {repr(fieldv.mesh.time(time_index))}", f"{cols},value"]
        for i in range(fieldv.grid.n_nodes):
            coords = ",".join(repr(float(c)) for c in pts[i])
            lines.append(f"{coords},{repr(float(sub[i]))}")
        slice_path.write_text("\n".join(lines) + "\n")
        written.append(slice_path)

    if args.svg:
        binding = np.zeros_like(fieldv.values, dtype=bool)
        for k in range(fieldv.mesh.steps + 1):
            nv, _ = best_jump_grid(fieldv.values[k], fieldv.grid, spec,
                                   fieldv.mesh.time(k))
            binding[k] = fieldv.values[k] >= nv - 1e-8
        svg_path = out / "value.svg"
        exports.svg_heatmap(
            svg_path, fieldv, binding,
            title=f"{meta.get('problem', spec.name)} value field",
            time_index=time_index,
        )
        written.append(svg_path)

    manifest = _manifest(
        args, args.file, meta.get("scheme", ""), fieldv.grid, fieldv.mesh, settings,
        {"field": str(args.field), "files": [p.name for p in written]},
    )
    exports.write_manifest(out / "manifest.json", manifest)

    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    text, spec, grid, mesh, settings = _load_inputs(args.file)
    spacing = args.spacing if args.spacing is not None else float(np.max(grid.step) * 5)
    osettings = OracleSettings(spacing=spacing, steps=args.steps, max_jumps=args.jumps)
    box = np.stack([grid.lo, grid.hi], axis=1)
    fieldv = oracle_field(spec, box, osettings)
    queries = args.query or [["0"] + [repr(float(c)) for c in grid.nodes[grid.n_nodes // 2]]]
    for q in queries:
        if len(q) != 1 + spec.m:
            raise ProblemError(
                f"query needs a time index and {spec.m} coordinates, got {q}"
            )
        k = int(q[0])
        state = [float(c) for c in q[1:]]
        if not 0 <= k <= osettings.steps:
            raise ProblemError(f"time index {k} out of range [0, {osettings.steps}]")
        value = float(fieldv.values[k][fieldv.node_index(state)])
        t = float(fieldv.times[k])
        print(f"t={t:g} x={state} value={value!r}")
    if fieldv.escaped:
        print("note: some displaced states left the box and were clamped")
    return EXIT_OK


def cmd_simulate(args) -> int:
    text, spec, grid, mesh, settings = _load_inputs(args.file)
    _warn_cfl(spec, grid, mesh)
    out = _out_dir(args.out)
    fieldv, report = solve_qvi(spec, grid, mesh, settings)
    pol = extract_policy(fieldv, spec, grid, mesh, eps=settings.fp_tol)
    start_x = (
        [float(v) for v in args.start]
        if args.start is not None
        else grid.nodes[grid.n_nodes // 2].tolist()
    )
    adversary = args.adversary
    if adversary.startswith("random:"):
        adversary = ("random", int(adversary.split(":", 1)[1]))
    elif adversary.startswith("fixed:"):
        adversary = ("fixed", adversary.split(":", 1)[1].split(","))
    elif adversary != "worst-case":
        raise ProblemError(
            "adversary must be 'worst-case', 'random:SEED' or 'fixed:EXPR[,EXPR..]'"
        )
    traj = simulate(spec, pol, adversary, (mesh.t0, start_x), mesh)
    path = out / "trajectory.csv"
    exports.write_trajectory_csv(path, traj, spec.m)
    manifest = _manifest(
        args, args.file, "qvi", grid, mesh, settings,
        {
            "start": start_x,
            "adversary": args.adversary,
            "payoff": traj.total,
            "jump_events": len(traj.events),
            "files": ["trajectory.csv"],
        },
    )
    exports.write_manifest(out / "manifest.json", manifest)
    print(f"payoff = {traj.total!r} (running {traj.running_cost!r}, "
          f"jumps {traj.jump_cost_total!r}, terminal {traj.terminal_cost!r})")
    print(f"jump events: {len(traj.events)}")
    if traj.truncated:
        print("note: trajectory left the box and was truncated", file=sys.stderr)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsegame",
        description="Finite-horizon minimax impulse-control game solver",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="kernel thread count (results are identical for any value)")

    p = sub.add_parser("solve", parents=[common], help="solve and export the value field")
    p.add_argument("file", help="problem file")
    p.add_argument("--scheme", choices=("qvi", "wn", "gamma"), default="qvi")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV_VAR} or .)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("check", parents=[common], help="run the invariant suite")
    p.add_argument("file", help="problem file")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--field", default=None, help="check an exported field instead of solving")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("export", parents=[common], help="re-export a solved field (CSV/SVG)")
    p.add_argument("file", help="problem file")
    p.add_argument("--field", required=True, help="value field CSV to export")
    p.add_argument("--svg", action="store_true", help="write a heatmap SVG")
    p.add_argument("--slice", default=None, help="time slice, e.g. t=0.5")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("oracle", parents=[common], help="brute-force lattice reference values")
    p.add_argument("file", help="problem file")
    p.add_argument("--spacing", type=float, default=None, help="lattice spacing (default 5 dx)")
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--jumps", type=int, default=2)
    p.add_argument("--query", nargs="+", action="append", default=None,
                   metavar="K X1 [X2..]", help="time index and state (repeatable)")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("simulate", parents=[common],
                       help="solve, extract the feedback policy and simulate")
    p.add_argument("file", help="problem file")
    p.add_argument("--start", nargs="+", default=None, metavar="X")
    p.add_argument("--adversary", default="worst-case",
                   help="worst-case | random:SEED | fixed:EXPR[,EXPR..]")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None:
        kernels.set_threads(args.threads)
    try:
        return args.fn(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ProblemFileError, ProblemError, ExprError, SolverError,
            exports.ExportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
