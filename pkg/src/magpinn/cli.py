"""Command-line driver: train, fem, eval, fields, force.

Exit codes: 0 ok, 1 training diverged, 2 config error, 3 checkpoint error,
4 FE non-convergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import fem, metrics
from .metrics import csv_numbers
from .geometry import build_layout
from .materials import BHCurve, default_materials
from .network import CheckpointError, load_checkpoint
from .problem import Problem
from .scaling import OutOfBox
from .training import TrainingDiverged, train

log = logging.getLogger("magpinn")

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_NONCONVERGENCE = 0, 1, 2, 3, 4


def _problem(rc: cfgmod.RunConfig) -> Problem:
    curve = BHCurve.from_file(rc.bh_curve) if rc.bh_curve else None
    mats = default_materials(rc.steel, rc.nu_ratio, curve)
    return Problem(free=rc.free, base=rc.design, materials=mats, scaling=rc.scaling,
                   steel=rc.steel, nu_ratio=rc.nu_ratio)


def _checkpoint_path(args, rc):
    path = args.checkpoint or rc.checkpoint
    if not path:
        raise cfgmod.ConfigError("no checkpoint given (--checkpoint or 'checkpoint' key)")
    return path


def cmd_train(args, rc, out: Path) -> int:
    problem = _problem(rc)
    net = rc.network()

    def progress(k, eta, loss):
        if k % max(1, rc.train.n_ite // 20) == 0:
            log.info("iteration %d  eta %.3e  loss %.6e", k, eta, loss)

    res = train(rc.train, net, problem, out_dir=out, progress=progress)
    final = res.history[-1][2] if res.history else float("nan")
    rate = rc.train.n_ite / res.wall_time if res.wall_time > 0 else float("inf")
    print(f"final loss {final:.6e}  wall {res.wall_time:.1f} s  {rate:.1f} it/s  "
          f"checkpoint {out / 'final.json'}")
    return EXIT_OK


def cmd_fem(args, rc, out: Path) -> int:
    xi = rc.design
    layout = build_layout(xi)
    max_area = args.max_area if args.max_area is not None else rc.max_area
    tol = args.tol if args.tol is not None else rc.tol
    mesh = fem.build_mesh(layout, max_area)
    mats = _problem(rc).materials
    fem.write_mesh_csv(mesh, out)
    try:
        sol = fem.solve(mesh, mats, layout=layout, tol=tol, max_newton=rc.max_newton)
    except fem.NonConvergence as exc:
        with open(out / "convergence.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iteration,residual\n")
            for k, r in enumerate(exc.history):
                fh.write(f"{k},{float(r)!r}\n")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    fem.write_solution_csv(sol, out)
    print(f"{mesh.n_nodes} nodes, {mesh.n_triangles} triangles, {sol.iterations} Newton iterations, "
          f"residual {sol.residual:.3e}")
    return EXIT_OK


def cmd_eval(args, rc, out: Path) -> int:
    path = _checkpoint_path(args, rc)
    load_checkpoint(path)  # fail fast with exit 3
    report = metrics.evaluate_suite(path, rc.n_designs, rc.train.seed, rc.max_area, rc.tol,
                                    out_dir=out, n_path=rc.n_path, fields=rc.eval_fields)
    sys.stdout.write(report.summary())
    return EXIT_OK


def cmd_fields(args, rc, out: Path) -> int:
    params, scaling, pdict, _ = load_checkpoint(_checkpoint_path(args, rc))
    problem = Problem.from_dict(pdict, scaling=scaling) if pdict else Problem(scaling=scaling)
    xi = rc.design
    layout = build_layout(xi)
    ev = metrics.PinnEvaluator(params, problem, xi)
    nx, ny = rc.grid_nx, rc.grid_ny
    if args.grid:
        nx, ny = args.grid
    x = (np.arange(nx) + 0.5) / nx * layout.L_x
    y = (np.arange(ny) + 0.5) / ny * layout.L_y
    X, Y = np.meshgrid(x, y)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    a, bx, by = ev(pts)
    reg = layout.classify_array(pts[:, 0], pts[:, 1])
    with open(out / "fields.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,region,A,Bx,By,B\n")
        for (px, py), r, ai, bxi, byi in zip(pts, reg, a, bx, by):
            fh.write(f"{csv_numbers(px, py)},{int(r)},{csv_numbers(ai, bxi, byi, np.hypot(bxi, byi))}\n")
    print(f"wrote {len(pts)} grid points to {out / 'fields.csv'}")
    return EXIT_OK


def cmd_force(args, rc, out: Path) -> int:
    xi = rc.design
    layout = build_layout(xi)
    mesh = fem.build_mesh(layout, rc.max_area)
    problem = _problem(rc)
    try:
        sol = fem.solve(mesh, problem.materials, layout=layout, tol=rc.tol, max_newton=rc.max_newton)
    except fem.NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    path = metrics.MstPath.around_icore(layout, xi.g, rc.n_path)
    rows = [("FE", metrics.mst_force(metrics.FemEvaluator(sol), path))]
    ck = args.checkpoint or rc.checkpoint
    if ck:
        params, scaling, pdict, _ = load_checkpoint(ck)
        pp = Problem.from_dict(pdict, scaling=scaling) if pdict else Problem(scaling=scaling)
        rows.append(("PINN", metrics.mst_force(metrics.PinnEvaluator(params, pp, xi), path)))
    rows.append(("MEC", metrics.mec_force(xi)))
    with open(out / "force.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,F_y\n")
        for name, f in rows:
            fh.write(f"{name},{float(f)!r}\n")
    for name, f in rows:
        print(f"{name:<5} F_y = {f:.6g} N/m")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "fem": cmd_fem, "eval": cmd_eval, "fields": cmd_fields,
            "force": cmd_force}


def _grid(text):
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be N or NXxNY, got {text!r}")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magpinn",
        description="Parametric magnetostatics: network training, FE reference, error and force evaluation.",
        epilog="config keys:\n" + cfgmod.help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog="config keys:\n" + cfgmod.help_text(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="flat key = value file")
        p.add_argument("--out", help="output directory (overrides 'out_dir')")
        p.add_argument("--seed", type=int, help="overrides 'seed'")
        p.add_argument("--threads", type=int, help="overrides 'threads'")
        if name in ("eval", "fields", "force"):
            p.add_argument("--checkpoint", help="overrides 'checkpoint'")
        if name == "fem":
            p.add_argument("--max-area", type=float, help="maximum triangle area in m^2")
            p.add_argument("--tol", type=float, help="Newton tolerance")
        if name == "fields":
            p.add_argument("--grid", type=_grid, help="grid resolution N or NXxNY")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("max_area", "checkpoint", "grid"):
        if not hasattr(args, name):
            setattr(args, name, None)
    if getattr(args, "tol", None) is None:
        args.tol = None
    try:
        rc = cfgmod.load(args.config)
        if args.seed is not None:
            rc.train.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise cfgmod.ConfigError("--threads must be at least 1")
            rc.train.threads = args.threads
        if args.out:
            rc.out_dir = args.out
        out = Path(rc.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, rc, out)
    except (cfgmod.ConfigError, OutOfBox, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            print(f"checkpoint error: {exc}", file=sys.stderr)
            return EXIT_CHECKPOINT
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
