"""Benchmark command line: run single cases, reproduce the parameter-sweep
tables, run mesh-convergence studies, and audit saved fields.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence or
failed audit, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import io as dio
from . import stabilization as stab
from .bench import (OMEGA, OUTFLOW, dmp_audit, error_norms,
                    local_dmp_audit, make_problem)
from .io import ConfigError, RunConfig, parse_config
from .mesh import build_structured
from .timeloop import (ANDERSON, NEWTON, TimeConfig, admissible_bounds,
                       run_steady, run_transient)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value configuration file")
    for f in fields(RunConfig):
        parser.add_argument(f"--{f.name}", default=None, help=argparse.SUPPRESS)


def _collect_overrides(args):
    return {f.name: getattr(args, f.name) for f in fields(RunConfig)
            if getattr(args, f.name, None) is not None}


def _build_case(cfg):
    problem = make_problem(cfg.problem)
    mesh = build_structured(cfg.nx, cfg.ny, domain=problem.domain,
                            kind=cfg.element)
    params = cfg.stab_params(problem.velocity.beta_bound, mesh.h_mean)
    tc = TimeConfig(stab=params, dt=cfg.dt, t_end=cfg.t_end, steady=cfg.steady,
                    solver=cfg.solver, projection=cfg.projection, tol=cfg.tol,
                    k_max=cfg.k_max, m=cfg.m, s_min=cfg.s_min,
                    omega0=cfg.omega0, omega_min=cfg.omega_min,
                    ls_tol=cfg.ls_tol)
    return mesh, problem, tc


def _sci(x):
    return "" if x is None else f"{x:.2e}"


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_run(args):
    cfg = parse_config(args.config, _collect_overrides(args))
    dio.echo_config(cfg, sys.stdout)
    mesh, problem, tc = _build_case(cfg)
    outdir = dio.output_dir(cfg)
    os.makedirs(outdir, exist_ok=True)

    if cfg.steady:
        u, report = run_steady(mesh, problem, tc)
        reports = [report]
        t_final = None
    else:
        result = run_transient(mesh, problem, tc)
        u, reports = result.u, result.reports
        t_final = result.times[-1]
        drops = np.diff(result.max_series)
        rises = np.diff(result.min_series)
        print(f"LED audit: max increase {max(drops.max(), 0.0):.3e}, "
              f"min decrease {max(-rises.min(), 0.0):.3e}")

    dio.write_field(mesh, u, os.path.join(outdir, "field.vtk"), t=t_final)
    dio.write_log(reports[-1], os.path.join(outdir, "log.csv"))
    bounds = admissible_bounds(mesh, problem, steady=cfg.steady)
    mx, mn = dmp_audit(u, bounds)
    print(f"global DMP violation: max {mx:.3e}, min {mn:.3e}")

    if problem.exact is not None:
        l1, l2 = error_norms(mesh, u, problem.exact, region=OMEGA)
        l1o, l2o = error_norms(mesh, u, problem.exact, region=OUTFLOW,
                               inflow_where=problem.inflow_where)
        print(f"errors: L1 {_sci(l1)}  L1_out {_sci(l1o)}  "
              f"L2 {_sci(l2)}  L2_out {_sci(l2o)}")

    if not all(r.converged for r in reports):
        print("solver did not converge", file=sys.stderr)
        return EXIT_SOLVER
    print(f"iterations: {reports[-1].iterations}")
    return EXIT_OK


def _table_row(cfg, q, eps):
    """One sweep row: both solvers, with and without projection."""
    row = {"q": q, "eps": eps}
    base = replace(cfg, q=q, eps=eps)
    nonsmooth = eps == 0.0
    u_best = None
    mesh = problem = None

    solver_cols = [("iters_A", ANDERSON, False), ("iters_Ap", ANDERSON, True)]
    if not nonsmooth:
        solver_cols += [("iters_N", NEWTON, False), ("iters_Np", NEWTON, True)]
    for col, solver, project in solver_cols:
        case = replace(base, solver=solver, projection=project,
                       detector=stab.NONSMOOTH if nonsmooth else base.detector)
        mesh, problem, tc = _build_case(case)
        u, report = run_steady(mesh, problem, tc)
        row[col] = report.iterations if report.converged else None
        if report.converged:
            u_best = u
    if u_best is not None and problem.exact is not None:
        row["L1"], row["L2"] = error_norms(mesh, u_best, problem.exact)
        row["L1_out"], row["L2_out"] = error_norms(
            mesh, u_best, problem.exact, region=OUTFLOW,
            inflow_where=problem.inflow_where)
    return row


def cmd_table(args):
    cfg = parse_config(args.config, _collect_overrides(args))
    qs = [float(s) for s in args.qs.split(",")]
    epss = [float(s) for s in args.epss.split(",")]
    if args.include_eps0:
        epss = epss + [0.0]
    rows = []
    print("q     eps       A     Ap    N     Np    L1        L2")
    for q in qs:
        for eps in epss:
            row = _table_row(cfg, q, eps)
            rows.append(row)
            print(f"{q:<5g} {_sci(eps):<9} "
                  f"{row.get('iters_A') or '--':<5} {row.get('iters_Ap') or '--':<5} "
                  f"{row.get('iters_N') or '--':<5} {row.get('iters_Np') or '--':<5} "
                  f"{_sci(row.get('L1')):<9} {_sci(row.get('L2'))}")
    outdir = dio.output_dir(cfg)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "table.csv")
    dio.write_table(rows, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_converge(args):
    cfg = parse_config(args.config, _collect_overrides(args))
    sizes = [int(s) for s in args.sizes.split(",")]
    problem = make_problem(cfg.problem)
    if problem.exact is None:
        raise ConfigError(f"{cfg.problem} has no exact solution to converge against")

    def tc_for(n):
        mesh_h = (problem.domain[1] - problem.domain[0]) / n
        params = cfg.stab_params(problem.velocity.beta_bound, mesh_h)
        return TimeConfig(stab=params, steady=True, solver=cfg.solver,
                          projection=cfg.projection, tol=cfg.tol,
                          k_max=cfg.k_max, m=cfg.m, s_min=cfg.s_min,
                          omega0=cfg.omega0, omega_min=cfg.omega_min,
                          ls_tol=cfg.ls_tol)

    print("h           L2          EOC")
    lines = ["h,L2,EOC"]
    prev = None
    for n in sizes:
        mesh = build_structured(n, n, domain=problem.domain, kind=cfg.element)
        u, report = run_steady(mesh, problem, tc_for(n))
        if not report.converged:
            print(f"n={n}: solver did not converge", file=sys.stderr)
            return EXIT_SOLVER
        _, l2 = error_norms(mesh, u, problem.exact)
        h = (problem.domain[1] - problem.domain[0]) / n
        order = None if prev is None else \
            float(np.log(prev[1] / l2) / np.log(prev[0] / h))
        prev = (h, l2)
        print(f"{h:<11.4e} {l2:<11.4e} {'' if order is None else f'{order:.3f}'}")
        lines.append(f"{repr(h)},{repr(l2)},{'' if order is None else repr(order)}")
    outdir = dio.output_dir(cfg)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "converge.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_audit(args):
    cfg = parse_config(args.config, _collect_overrides(args))
    coords, values = dio.read_field(args.field)
    problem = make_problem(cfg.problem)
    mesh = build_structured(cfg.nx, cfg.ny, domain=problem.domain,
                            kind=cfg.element)
    if mesh.n_nodes != len(values):
        raise ConfigError(
            f"field has {len(values)} nodes but the configured mesh has "
            f"{mesh.n_nodes}; pass matching --nx/--ny/--element")
    bounds = admissible_bounds(mesh, problem, steady=bool(cfg.steady))
    mx, mn = dmp_audit(values, bounds)
    bad = local_dmp_audit(mesh, values)
    print(f"global DMP violation: max {mx:.3e}, min {mn:.3e}")
    print(f"local DMP violations at {len(bad)} interior nodes")
    ok = mx == 0.0 and mn == 0.0 and not bad
    return EXIT_OK if ok else EXIT_SOLVER


# ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="dmpfem",
        description="Monotonicity-preserving stabilized FE transport benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve one configured case")
    _add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_table = sub.add_parser("table", help="sweep q x eps over both solvers")
    _add_config_flags(p_table)
    p_table.add_argument("--qs", default="1,4,8,25")
    p_table.add_argument("--epss", default="1e-1,1e-2,1e-3,1e-4")
    p_table.add_argument("--include-eps0", action="store_true",
                         help="append the non-smooth eps=0 rows (Anderson only)")
    p_table.set_defaults(func=cmd_table)

    p_conv = sub.add_parser("converge", help="mesh-refinement study")
    _add_config_flags(p_conv)
    p_conv.add_argument("--sizes", default="12,24,48,96")
    p_conv.set_defaults(func=cmd_converge)

    p_audit = sub.add_parser("audit", help="re-check DMP bounds on a saved field")
    _add_config_flags(p_audit)
    p_audit.add_argument("field", help="VTK field file written by `run`")
    p_audit.set_defaults(func=cmd_audit)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
