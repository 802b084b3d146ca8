"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 bad input, 3 numerical
non-convergence. CSV goes to stdout with 17 significant digits; JSON
reports go to stdout for report-only commands and to ``--report`` (or
stderr) for commands that also print CSV.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from . import dynamics as dy
from . import expr as ex
from . import models
from .errors import AccuracyError, ConditioningError, FracMechError
from .frac_ops import Grid, SampledFunction, Side, apply, build_operator
from .problem import ProblemFile, ProblemFileError, load
from .solver import solve_lvl

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 1, 2, 3


class InputError(FracMechError, ValueError):
    """Command-line arguments do not describe a runnable job."""


# -- output helpers ------------------------------------------------------------------


def _num(value: float) -> str:
    return f"{float(value):.17g}"


def write_csv(stream, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([_num(v) for v in row])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dump_json(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2)


def _emit_report(args, report: dict, stdout) -> None:
    text = dump_json(report) + "\n"
    if getattr(args, "report", None):
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def _base_report(command: str, problem: ProblemFile | None = None) -> dict:
    report = {"tool": "fracmech", "version": __version__, "command": command}
    if problem is not None:
        report["input"] = problem.to_dict()
    return report


def _texts(exprs, names=None) -> list[str]:
    return [ex.to_text(e if names is None else ex.rename(e, names)) for e in exprs]


# -- commands ---------------------------------------------------------------------------


def cmd_deriv(args, stdout) -> int:
    f = ex.parse(args.f, {"t"})
    grid = Grid(args.a, args.b, args.n_points)
    values = np.broadcast_to(np.asarray(ex.evaluate(f, {"t": grid.nodes}), float), grid.nodes.shape)
    op = build_operator(Side.parse(args.side), args.alpha, grid)
    out = apply(op, SampledFunction(grid, values))
    write_csv(stdout, ["t", "value"], [grid.nodes, out.values])
    return EXIT_OK


def cmd_derive(args, stdout) -> int:
    problem = load(args.file)
    lag = problem.lagrangian()
    momenta = dy.derive_momenta(lag)
    ham = dy.canonical_hamiltonian(lag, momenta)
    is_lvl = problem.kind == "linear_velocity" and not problem.constraints
    names = problem.lvl().from_ladder_names() if is_lvl else None

    report = _base_report("derive", problem)
    report["momenta"] = {
        _display(f"p{r + 1}_{n}", names): v.to_text(names)
        for (r, n), v in momenta.p.items()
    }
    report["momenta"].update(
        {f"pi{r + 1}_{n}": v.to_text(names) for (r, n), v in momenta.pi.items()}
    )
    report["vanishing_momenta"] = [_display(v, names) for v in momenta.vanishing()]
    report["hamiltonian"] = _texts([ham.H], names)[0]
    report["el_equations"] = [e.to_text(names) for e in dy.el_equations(lag)]
    report["hamilton_equations"] = {
        label: e.to_text(names) for label, e in dy.hamilton_equations(ham).items()
    }
    if is_lvl:
        lvl = problem.lvl()
        report["primary_constraints"] = _texts(dy.primary_constraints(momenta, lvl).constraints, names)
        report["lvl_el_equations"] = [e.to_text(names) for e in dy.lvl_el_equations(lvl)]
        report["combined_equation"] = [
            e.to_text(names) for e in dy.combined_equation(ham, lvl)
        ]
    if lag.multipliers:
        report["dH_dlambda"] = {
            lam: ex.to_text(ex.diff(ham.H, lam)) for lam in lag.multipliers
        }
    stdout.write(dump_json(report) + "\n")
    return EXIT_OK


def _display(name: str, names) -> str:
    return names.get(name, name) if names else name


def cmd_residual(args, stdout) -> int:
    problem = load(args.file)
    traj = problem.phase_trajectory()
    lag = problem.lagrangian()
    report = _base_report("residual", problem)
    if problem.kind == "linear_velocity" and not problem.constraints:
        lvl = problem.lvl()
        field = dy.lvl_el_residual(lvl, traj)
        momenta_given = all(f"p{r + 1}_0" in traj for r in range(lvl.R))
        if momenta_given:
            ham = dy.lvl_hamiltonian(lvl)
            report["hamilton"] = _norms(dy.hamilton_residuals(ham, traj))
            cons = dy.primary_constraints(ham.momenta, lvl, traj)
            report["constraint_violation"] = cons.max_violation
    else:
        field = dy.el_residual(lag, traj)
    report["el"] = _norms(field)
    header = ["t"] + list(field.residuals)
    write_csv(stdout, header, [field.nodes] + list(field.residuals.values()))
    _emit_report(args, report, stdout)
    return EXIT_OK


def _norms(field: dy.ResidualField) -> dict:
    return {
        "max_abs": field.max_abs,
        "l2": field.l2,
        "excluded_nodes": list(field.excluded_nodes),
        "per_equation": field.norms(),
    }


def cmd_solve(args, stdout) -> int:
    problem = load(args.file)
    if problem.boundary is None:
        raise ProblemFileError("solve needs a boundary section")
    if problem.constraints:
        raise ProblemFileError("solve supports unconstrained linear_velocity models only")
    lvl = problem.lvl()
    rep = solve_lvl(lvl, problem.grid, problem.boundary, args.tol, args.max_iter)
    traj = rep.trajectory
    names = lvl.from_ladder_names()
    keys = sorted(traj.samples, key=lambda k: (k[0] != "q", k))
    write_csv(stdout, ["t"] + [names.get(k, k) for k in keys], [problem.grid.nodes] + [traj[k] for k in keys])
    report = _base_report("solve", problem)
    report["solve"] = rep.summary()
    report["tol"] = args.tol
    _emit_report(args, report, stdout)
    return EXIT_OK if rep.converged else EXIT_NONCONVERGENCE


def cmd_check_equivalence(args, stdout) -> int:
    if args.trials < 1:
        raise InputError("--trials must be at least 1")
    rng = np.random.default_rng(args.seed)
    if args.file:
        problem = load(args.file)
        model_list = [problem.lvl()]
        grid = problem.grid
        echo = problem.to_dict()
    else:
        model_list = [models.demo_model(args.alpha)]
        grid = Grid(0.0, 1.0, args.n_points)
        echo = None
    if args.random_models:
        model_rng = np.random.default_rng([args.seed, 1])
        model_list += [
            models.random_lvl_model(model_rng, R=1 + i % 3) for i in range(args.random_models)
        ]
    rows, worst = [], 0.0
    for lvl in model_list:
        model_worst = 0.0
        for _ in range(args.trials):
            traj = models.random_trajectory(lvl, grid, rng)
            diff = dy.check_equivalence(lvl, traj, mismatch=args.mismatch_operators)
            model_worst = max(model_worst, diff.max_abs_diff)
        worst = max(worst, model_worst)
        rows.append(
            {
                "a": [ex.to_text(a) for a in lvl.a],
                "V": ex.to_text(lvl.V),
                "alpha": lvl.alpha,
                "max_abs_diff": model_worst,
            }
        )
    passed = worst < dy.EQUIVALENCE_TOL
    report = _base_report("check-equivalence")
    if echo is not None:
        report["input"] = echo
    report.update(
        {
            "trials": args.trials,
            "seed": args.seed,
            "n_points": grid.n_points,
            "mismatch_operators": bool(args.mismatch_operators),
            "tolerance": dy.EQUIVALENCE_TOL,
            "models": rows,
            "max_abs_diff": worst,
            "passed": passed,
        }
    )
    stdout.write(dump_json(report) + "\n")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _parse_pair(text: str) -> tuple[str, str]:
    parts = text.split(":")
    if len(parts) != 2 or not all(parts):
        raise InputError(f"--pair expects q:p, got {text!r}")
    return parts[0], parts[1]


def cmd_poisson(args, stdout) -> int:
    pairs = [_parse_pair(p) for p in args.pair]
    A, B = ex.parse(args.A), ex.parse(args.B)
    bracket = dy.poisson(A, B, pairs)
    report = _base_report("poisson")
    report.update({"A": ex.to_text(A), "B": ex.to_text(B), "pairs": [list(p) for p in pairs]})
    report["bracket"] = ex.to_text(bracket)
    if args.at:
        binding = {}
        for item in args.at:
            name, sep, value = item.partition("=")
            if not sep:
                raise InputError(f"--at expects name=value, got {item!r}")
            binding[name.strip()] = float(value)
        missing = sorted(ex.free_vars(bracket) - set(binding))
        if missing:
            raise InputError(f"--at does not bind {missing}")
        report["at"] = binding
        report["value"] = float(ex.evaluate(bracket, binding))
    stdout.write(dump_json(report) + "\n")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracmech", description="Fractional variational mechanics toolkit."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deriv", help="sample a fractional derivative of f(t) as CSV")
    p.add_argument("--f", required=True, help="expression in t")
    p.add_argument("--side", choices=["left", "right"], default="left")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--n-points", type=int, default=1025)
    p.set_defaults(run=cmd_deriv)

    p = sub.add_parser("derive", help="symbolic momenta, Hamiltonian, constraints, equations")
    p.add_argument("file")
    p.set_defaults(run=cmd_derive)

    p = sub.add_parser("residual", help="EL (and Hamilton) residuals of the file's trajectory")
    p.add_argument("file")
    p.add_argument("--report", help="write the JSON summary here instead of stderr")
    p.set_defaults(run=cmd_residual)

    p = sub.add_parser("solve", help="solve a linear-velocity model with Newton's method")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--report", help="write the JSON report here instead of stderr")
    p.set_defaults(run=cmd_solve)

    p = sub.add_parser("check-equivalence", help="compare direct and Hamiltonian EL residuals")
    p.add_argument("file", nargs="?", help="problem file (default: the built-in demo model)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--random-models", type=int, default=0, help="add this many random models")
    p.add_argument("--alpha", type=float, default=0.5, help="order for the demo model")
    p.add_argument("--n-points", type=int, default=129, help="grid size for the demo model")
    p.add_argument(
        "--mismatch-operators",
        action="store_true",
        help="debug: perturb the right operator on one side (must fail)",
    )
    p.set_defaults(run=cmd_check_equivalence)

    p = sub.add_parser("poisson", help="Poisson bracket of two expressions")
    p.add_argument("--A", required=True)
    p.add_argument("--B", required=True)
    p.add_argument("--pair", action="append", default=[], help="conjugate pair q:p (repeatable)")
    p.add_argument("--at", action="append", default=[], help="name=value binding (repeatable)")
    p.set_defaults(run=cmd_poisson)
    return parser


def main(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    args = build_parser().parse_args(argv)
    try:
        return args.run(args, stdout)
    except (ConditioningError, AccuracyError) as err:
        print(f"fracmech: numerical failure: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (FracMechError, OSError, yaml.YAMLError) as err:
        print(f"fracmech: error: {err}", file=sys.stderr)
        return EXIT_INPUT


def run_captured(argv: Sequence[str]) -> tuple[int, str]:
    """Run the CLI in-process and return ``(exit code, stdout text)``."""
    buffer = io.StringIO()
    try:
        code = main(argv, buffer)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_INPUT
    return code, buffer.getvalue()


if __name__ == "__main__":
    sys.exit(main())
