"""Batch command-line interface: run, validate, benchmarks."""

from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import benchmarks as bench
from .errors import KLShellError, NonConvergenceError
from .modelfile import parse_model, write_model
from .output import write_history, write_surface
from .solve import arc_length_run, newton_run

FAST_SIZES = {
    "1": {"nel": 6, "increments": 10},
    "2": {"nel_circ": 8, "nel_ax": 3, "increments": 8},
    "3": {"nel_circ": 6, "nel_ax": 10, "max_steps": 25},
    "4": {"nel_circ": 5, "nel_ax": 5, "max_steps": 25},
    "hexcan": {"nel": (3, 4)},
}


def _run_case(case, out: Path, steps=None, mesh_every=None, subdivision=4,
              tag=""):
    out.mkdir(parents=True, exist_ok=True)
    am = case.build()
    kind, settings = case.solver_settings()
    if steps is not None:
        if kind == "newton":
            settings.increments = steps
        else:
            settings.max_steps = steps
    names = [name for name, _ in am.monitors]
    meshes = []

    def on_step(rec, u):
        if mesh_every and rec.step % mesh_every == 0:
            path = out / f"surface{tag}_step{rec.step:04d}.vtk"
            write_surface(am, u, path, subdivision)
            meshes.append(path)

    t0 = time.perf_counter()
    if kind == "newton":
        history, u = newton_run(am, settings, lam_max=case.lam_max,
                                on_step=on_step)
    else:
        history, u = arc_length_run(am, settings, on_step=on_step)
    wall = time.perf_counter() - t0

    write_history(history, names, out / f"history{tag}.csv")
    write_surface(am, u, out / f"surface{tag}_final.vtk", subdivision)
    last = history.records[-1]
    print(f"converged {len(history.records)} steps to lambda = {last.lam:.6g} "
          f"({history.total_iterations} iterations, {wall:.1f} s)")
    for name in names:
        vals = ", ".join(f"{v:.6g}" for v in last.monitors[name])
        print(f"  monitor {name}: [{vals}]")
    return am, history, u


def cmd_run(args):
    case = parse_model(args.model)
    try:
        _run_case(case, Path(args.out), steps=args.steps,
                  mesh_every=args.mesh_every, subdivision=args.subdivision)
    except NonConvergenceError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        if exc.residual_norm is not None:
            print(f"last residual norm: {exc.residual_norm:.6e}", file=sys.stderr)
        return 1
    return 0


def cmd_validate(args):
    case = parse_model(args.model)
    model = case.model
    am = case.build()
    n_el = sum(k.nel for k, _ in am.kernels)
    print(f"valid: {len(model.patches)} patches, {n_el} elements, "
          f"{am.n_dof} dofs ({am.free.size} free), "
          f"{len(am.strips)} bending strips")
    return 0


def _bundled_case(name):
    path = resources.files("klshell.data") / f"case{name}.yaml"
    return parse_model(str(path))


def cmd_benchmarks(args):
    out = Path(args.out)
    name = args.case
    if args.fast:
        desc = bench.CASES[name](**FAST_SIZES[name])
        case = parse_model(desc)
    else:
        case = _bundled_case(name)
    try:
        if name == "hexcan":
            am1, h1, u1 = _run_case(case, out, steps=args.steps, tag="_strips",
                                    subdivision=args.subdivision)
            jump1 = bench.interface_normal_jump(am1, u1)
            desc0 = dict(case.description, strips="none")
            case0 = parse_model(desc0)
            am0, h0, u0 = _run_case(case0, out, steps=args.steps,
                                    tag="_nostrips", subdivision=args.subdivision)
            jump0 = bench.interface_normal_jump(am0, u0)
            report = (f"max interface normal jump with strips:    {jump1:.3f} deg\n"
                      f"max interface normal jump without strips: {jump0:.3f} deg\n")
            (out / "normal_jump.txt").write_text(report)
            print(report.strip())
        else:
            _run_case(case, out, steps=args.steps, mesh_every=args.mesh_every,
                      subdivision=args.subdivision)
    except NonConvergenceError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 1
    return 0


def make_parser():
    ap = argparse.ArgumentParser(
        prog="klshell",
        description="Multi-patch isogeometric Kirchhoff-Love shell solver")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve a model file")
    p_run.add_argument("model")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--steps", type=int, default=None,
                       help="override increment/step count")
    p_run.add_argument("--mesh-every", type=int, default=None)
    p_run.add_argument("--subdivision", type=int, default=4)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a model file without solving")
    p_val.add_argument("model")
    p_val.set_defaults(func=cmd_validate)

    p_b = sub.add_parser("benchmarks", help="run a bundled benchmark case")
    p_b.add_argument("--case", required=True, choices=sorted(bench.CASES))
    p_b.add_argument("--out", required=True)
    p_b.add_argument("--steps", type=int, default=None)
    p_b.add_argument("--mesh-every", type=int, default=None)
    p_b.add_argument("--subdivision", type=int, default=4)
    p_b.add_argument("--fast", action="store_true",
                     help="coarse, quick variant of the case")
    p_b.set_defaults(func=cmd_benchmarks)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except KLShellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
