"""Command line entry point: ``hdivbiot {solve,convergence,adapt,precond} config.ini``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .exceptions import HdivBiotError
from .harness import load_config, run_adaptive, run_convergence, run_precond_sweep, run_solve

_KIND = {"solve": "SOLVE", "convergence": "CONVERGENCE", "adapt": "ADAPTIVE",
         "precond": "PRECOND_SWEEP"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdivbiot", description=__doc__)
    parser.add_argument("command", choices=tuple(_KIND))
    parser.add_argument("config", help="INI configuration file")
    parser.add_argument("--output-dir", default=None, help="directory for CSV/VTK/MTX output")
    parser.add_argument("--vtk", action="store_true", help="write legacy VTK files")
    parser.add_argument("--no-smoothing", action="store_true", help="skip mesh smoothing after refinement")
    parser.add_argument("--no-scaling", action="store_true", help="solve the unscaled system")
    parser.add_argument("--solver", choices=("direct", "pminres"), default=None)
    parser.add_argument("--dump-matrix", action="store_true",
                        help="write the system matrix in Matrix Market format")
    return parser


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer, bool, np.bool_)):
        return str(int(v))
    return "%.6e" % v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        changes = {"kind": _KIND[args.command]}
        if args.output_dir is not None:
            changes["output_dir"] = args.output_dir
        if args.vtk:
            changes["vtk"] = True
        if args.no_smoothing:
            changes["smoothing"] = False
        if args.no_scaling:
            changes["scaling"] = False
        if args.solver is not None:
            changes["solver"] = args.solver
        if args.dump_matrix:
            changes["dump_matrix"] = True
        config = replace(config, **changes)
        if args.command == "solve":
            sol, report, errors, est = run_solve(config)
            print(f"dofs {sol.system.n_dofs} iterations {report.iterations} "
                  f"residual {report.residual:.6e} xi {est.xi:.6e}")
            if errors is not None:
                print(" ".join(f"{k} {v:.6e}" for k, v in errors.items()))
        elif args.command == "convergence":
            table = run_convergence(config)
            cols = ("dofs", "e_triple", "rate_triple", "e_p", "rate_p", "eff")
            print(" ".join(cols))
            for r in table.rows:
                print(" ".join(_fmt(r[c]) for c in cols))
        elif args.command == "adapt":
            trace = run_adaptive(config)
            for r in trace.rows:
                print(f"step {r.step} dofs {r.dofs} xi {r.xi:.6e} marked {r.marked}")
        else:
            table = run_precond_sweep(config)
            for r in table.rows:
                print(" ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
    except HdivBiotError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
