"""Experiment configurations, convergence tables and the preconditioner sweep.

Configuration files are INI files with the sections ``[problem]``,
``[parameters]``, ``[run]`` and ``[sweep]``.  Every key is listed in
:data:`CONFIG_KEYS`; anything else raises :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
import os
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .adapt import FACET_MARKING, SPLIT_MARKING, AdaptiveTrace, adaptive_loop, solve_case, write_table
from .cases import (SQUARE_PARAMS, Case, lshape_case, lshape_params, square_case, stripe_case,
                    stripe_params)
from .elements import REF_VERTICES, evaluate
from .estimate import estimate, write_indicator_vtk
from .exceptions import ConfigError
from .forms import CG_PRESSURE, DG_PRESSURE, ModelParameters
from .mesh import build_mesh, write_vtk
from .norms import compute_errors, rates_h
from .solve import build_preconditioner, minres, solve_direct, solve_minres
from .system import apply_scaling, build_system, export_matrix

RUN_KINDS = ("SOLVE", "CONVERGENCE", "ADAPTIVE", "PRECOND_SWEEP")
CASES = ("square", "lshape", "stripe")
_PARAM_FIELDS = tuple(f.name for f in fields(ModelParameters) if f.name != "gravity")

CONFIG_KEYS = {
    "problem": ("case", "k", "formulation", "contrast", "mean_constraint", "h_ref"),
    "parameters": _PARAM_FIELDS + ("gravity_x", "gravity_y"),
    "run": ("kind", "levels", "resolution", "max_steps", "zeta", "marking", "smoothing", "solver",
            "rtol", "maxit", "scaling", "output_dir", "vtk", "dump_matrix"),
    "sweep": ("ells", "kappa", "lambda", "beta_u"),
}


@dataclass
class CaseConfig:
    """Everything one run needs.

    ``levels`` are mesh resolutions (uniform runs and the sweep use them as
    the refinement parameter); ``resolution`` is the starting mesh of
    ``SOLVE`` and ``ADAPTIVE`` runs.
    """

    case: str = "square"
    params: ModelParameters = SQUARE_PARAMS
    formulation: str = CG_PRESSURE
    k: int = 0
    kind: str = "CONVERGENCE"
    levels: tuple = (2, 4, 8, 16)
    resolution: int = 2
    max_steps: int = 10
    zeta: float = 1e-7
    marking: str = SPLIT_MARKING
    solver: str = "direct"
    rtol: float = 1e-6
    maxit: int = 500
    scaling: bool = True
    smoothing: bool = True
    output_dir: str | None = None
    vtk: bool = False
    dump_matrix: bool = False
    contrast: str = "mild"
    mean_constraint: bool | None = None
    h_ref: float = 0.05
    sweep_kappa: tuple = (1e-3, 1e-5, 1e-7)
    sweep_lambda: tuple = (1.0, 1e3, 1e6, 1e9)
    sweep_beta_u: tuple = (10.0,)
    sweep_ells: tuple = (2, 4, 8)

    def __post_init__(self):
        if self.k not in (0, 1, 2):
            raise ConfigError("k must be 0, 1 or 2")
        if self.kind not in RUN_KINDS:
            raise ConfigError(f"run kind must be one of {RUN_KINDS}")
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}")
        if self.formulation not in (CG_PRESSURE, DG_PRESSURE):
            raise ConfigError("formulation must be CG_PRESSURE or DG_PRESSURE")
        if self.solver not in ("direct", "pminres"):
            raise ConfigError("solver must be direct or pminres")
        if self.kind == "CONVERGENCE" and len(self.levels) < 2:
            raise ConfigError("a convergence run needs at least two levels")
        if self.marking not in (SPLIT_MARKING, FACET_MARKING):
            raise ConfigError("marking must be split or facet")
        if not 0.0 < self.zeta <= 1.0:
            raise ConfigError("zeta must lie in (0, 1]")


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def parse_config(text: str) -> CaseConfig:
    """Build a :class:`CaseConfig` from INI text (fail-fast on unknown keys)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in cp.sections():
        if section not in CONFIG_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in CONFIG_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    get = lambda s, k: cp[s][k] if cp.has_option(s, k) else None  # noqa: E731
    kw = {}
    try:
        pr = "problem"
        if get(pr, "case") is not None:
            kw["case"] = get(pr, "case").strip().lower()
        if get(pr, "k") is not None:
            kw["k"] = int(get(pr, "k"))
        if get(pr, "formulation") is not None:
            kw["formulation"] = get(pr, "formulation").strip().upper()
        if get(pr, "contrast") is not None:
            kw["contrast"] = get(pr, "contrast").strip().lower()
        if get(pr, "mean_constraint") is not None:
            kw["mean_constraint"] = cp.getboolean(pr, "mean_constraint")
        if get(pr, "h_ref") is not None:
            kw["h_ref"] = float(get(pr, "h_ref"))
        run = "run"
        conv = {"kind": lambda s: s.strip().upper(), "levels": _ints, "resolution": int,
                "max_steps": int, "zeta": float, "marking": lambda s: s.strip().lower(), "solver": lambda s: s.strip().lower(),
                "rtol": float, "maxit": int, "output_dir": str.strip}
        for key, fn in conv.items():
            if get(run, key) is not None:
                kw[key] = fn(get(run, key))
        for key in ("smoothing", "scaling", "vtk", "dump_matrix"):
            if get(run, key) is not None:
                kw[key] = cp.getboolean(run, key)
        sw = "sweep"
        for key, fn in (("ells", _ints), ("kappa", _floats), ("lambda", _floats), ("beta_u", _floats)):
            if get(sw, key) is not None:
                kw[f"sweep_{key}"] = fn(get(sw, key))
        overrides = {}
        if cp.has_section("parameters"):
            for key, value in cp["parameters"].items():
                if key not in ("gravity_x", "gravity_y"):
                    overrides[key] = float(value)
            gx, gy = get("parameters", "gravity_x"), get("parameters", "gravity_y")
            if gx is not None or gy is not None:
                overrides["gravity"] = (float(gx or 0.0), float(gy or 0.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    config = CaseConfig(**kw)
    try:
        params = replace(default_params(config), **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return replace(config, params=params)


def load_config(path) -> CaseConfig:
    return parse_config(Path(path).read_text())


def default_params(config: CaseConfig) -> ModelParameters:
    if config.case == "square":
        return SQUARE_PARAMS
    if config.case == "lshape":
        return lshape_params(config.contrast)
    return stripe_params()


def manufactured_case_square(params: ModelParameters | None = None, k: int = 0,
                             formulation: str = CG_PRESSURE) -> Case:
    """The smooth two-subdomain unit-square case with all its manufactured data."""
    return square_case(k, formulation, params)


def make_case(config: CaseConfig, params: ModelParameters | None = None) -> Case:
    params = params if params is not None else config.params
    if config.case == "square":
        mc = True if config.mean_constraint is None else config.mean_constraint
        case = square_case(config.k, config.formulation, params, mean_constraint=mc)
    elif config.case == "lshape":
        case = lshape_case(config.contrast, config.k, config.formulation, params=params)
    else:
        case = stripe_case(config.k, config.formulation, config.h_ref, params)
    if config.mean_constraint is not None:
        case.mean_constraint = config.mean_constraint
    return case


def _output(config: CaseConfig, name: str) -> Path | None:
    if config.output_dir is None:
        return None
    os.makedirs(config.output_dir, exist_ok=True)
    return Path(config.output_dir) / name


# ----------------------------------------------------------------------
# convergence tables


ERROR_COLUMNS = ("level", "h", "dofs", "e_triple", "rate_triple", "e_u", "rate_u", "e_p", "rate_p",
                 "e_phi", "rate_phi", "xi", "eff")


@dataclass
class ErrorTable:
    """Per-level errors with experimental rates (``nan`` on the first row).

    ``e_triple`` is the triple norm (its starred variant for discontinuous
    pressure), ``e_u`` the broken energy norm of the displacement error,
    ``e_p`` the (starred for DG) pressure error and ``eff`` the effectivity
    of the estimator.
    """

    rows: list = field(default_factory=list)
    uniform: bool = True

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def rates(self, name: str) -> np.ndarray:
        return self.column("rate_" + name)[1:]

    def write_csv(self, path) -> None:
        write_table(path, ERROR_COLUMNS, [[r[c] for c in ERROR_COLUMNS] for r in self.rows])


def _with_rates(rows):
    h = np.array([r["h"] for r in rows])
    for name in ("triple", "u", "p", "phi"):
        e = np.array([r["e_" + name] for r in rows])
        rates = np.concatenate([[np.nan], rates_h(e, h)])
        for r, v in zip(rows, rates):
            r["rate_" + name] = float(v)
    return rows


def run_convergence(config: CaseConfig) -> ErrorTable:
    """Uniform refinement over ``config.levels``; writes ``convergence.csv``."""
    case = make_case(config)
    rows = []
    dg = config.formulation == DG_PRESSURE
    for level, n in enumerate(config.levels):
        mesh = build_mesh(case.geometry, n)
        sol, _ = solve_case(mesh, case, config.k, config.formulation, config.solver,
                            config.scaling, config.rtol, config.maxit)
        err = compute_errors(sol)
        rep = estimate(sol, case, err)
        rows.append({
            "level": level, "h": float(mesh.cell_diameters.max()), "dofs": sol.system.n_dofs,
            "e_triple": err["triple_star" if dg else "triple"], "e_u": err["e_u"],
            "e_p": err["e_p_star" if dg else "e_p"], "e_phi": err["e_phi"],
            "xi": rep.xi, "eff": rep.effectivity,
        })
    table = ErrorTable(_with_rates(rows))
    path = _output(config, "convergence.csv")
    if path is not None:
        table.write_csv(path)
    return table


# ----------------------------------------------------------------------
# single solves and adaptivity


def _vertex_values(space_map, mesh, coeffs, space):
    """Average of the cellwise values at each vertex."""
    cells = space_map.cells
    vals = evaluate(space, mesh, space_map, coeffs, cells, REF_VERTICES).values
    nv = mesh.n_vertices
    count = np.bincount(mesh.cells[cells].ravel(), minlength=nv).astype(float)
    idx = mesh.cells[cells].ravel()
    if vals.ndim == 2:
        out = np.bincount(idx, vals.ravel(), minlength=nv)
    else:
        out = np.stack([np.bincount(idx, vals[..., i].ravel(), minlength=nv) for i in range(2)], -1)
        count = count[:, None]
    return np.divide(out, count, out=np.zeros_like(out), where=count > 0)


def write_solution_vtk(path, sol) -> None:
    """Vertex-averaged displacement, fluid and total pressure."""
    system = sol.system
    S = system.spaces
    mesh = system.mesh
    write_vtk(path, mesh, point_data={
        "displacement": _vertex_values(S.V, mesh, sol.u, S.V.space),
        "fluid_pressure": _vertex_values(S.Q, mesh, sol.p, S.Q.space),
        "total_pressure": _vertex_values(S.Z, mesh, sol.phi, S.Z.space),
    })


SOLVE_COLUMNS = ("dofs", "iterations", "residual", "seconds", "e_triple", "e_u", "e_p", "e_phi",
                 "xi", "eff")


def run_solve(config: CaseConfig):
    """One solve on the ``resolution`` mesh; returns ``(Solution, SolveReport, errors, estimate)``."""
    case = make_case(config)
    mesh = build_mesh(case.geometry, config.resolution)
    params = case.params.with_penalties(config.k)
    system = build_system(mesh, params, config.formulation, case, config.k)
    if config.scaling:
        system = apply_scaling(system)
    path = _output(config, "matrix.mtx")
    if config.dump_matrix and path is not None:
        export_matrix(system, path)
    if config.solver == "direct":
        sol, report = solve_direct(system)
    else:
        sol, report = solve_minres(system, rtol=config.rtol, maxit=config.maxit)
    err = compute_errors(sol) if case.exact is not None else None
    rep = estimate(sol, case, err)
    dg = config.formulation == DG_PRESSURE
    e = err or {}
    row = [system.n_dofs, report.iterations, report.residual, report.seconds,
           e.get("triple_star" if dg else "triple"), e.get("e_u"),
           e.get("e_p_star" if dg else "e_p"), e.get("e_phi"), rep.xi, rep.effectivity]
    path = _output(config, "solve.csv")
    if path is not None:
        write_table(path, SOLVE_COLUMNS, [row])
        if config.vtk:
            write_solution_vtk(path.with_name("solution.vtk"), sol)
            write_indicator_vtk(path.with_name("indicators.vtk"), mesh, rep)
    return sol, report, err, rep


def run_adaptive(config: CaseConfig, uniform: bool = False) -> AdaptiveTrace:
    """Adaptive (or, with ``uniform``, uniformly refined) loop; writes ``adaptive.csv``."""
    case = make_case(config)
    vtk_dir = config.output_dir if (config.vtk and config.output_dir) else None
    if vtk_dir:
        os.makedirs(vtk_dir, exist_ok=True)
    trace = adaptive_loop(case, config.zeta, config.max_steps, config.smoothing, config.resolution,
                          config.k, config.formulation, uniform=uniform, vtk_dir=vtk_dir,
                          solver=config.solver, marking=config.marking)
    path = _output(config, "uniform.csv" if uniform else "adaptive.csv")
    if path is not None:
        trace.write_csv(path)
    return trace


# ----------------------------------------------------------------------
# preconditioner sweep


PRECOND_COLUMNS = ("ell", "dofs", "kappa", "lambda", "beta_u", "iterations", "residual", "seconds",
                   "converged")


@dataclass
class PrecondTable:
    rows: list = field(default_factory=list)

    def iterations(self, **match) -> np.ndarray:
        sel = [r for r in self.rows if all(r[k] == v for k, v in match.items())]
        return np.array([r["iterations"] for r in sel])

    def write_csv(self, path) -> None:
        write_table(path, PRECOND_COLUMNS, [[r[c] for c in PRECOND_COLUMNS] for r in self.rows])


def precond_run(case: Case, ell: int, k: int = 0, formulation: str = CG_PRESSURE, scaling: bool = True,
                rtol: float = 1e-6, maxit: int = 500, use_a1h: bool = False) -> dict:
    """One preconditioned MINRES solve on mesh level ``ell``."""
    mesh = build_mesh(case.geometry, ell)
    params = case.params.with_penalties(k)
    system = build_system(mesh, params, formulation, case, k)
    if scaling:
        system = apply_scaling(system)
    t0 = time.perf_counter()
    P = build_preconditioner(system, use_a1h=use_a1h)
    _, rep = minres(system.matrix, system.rhs, P.apply, rtol=rtol, maxit=maxit)
    return {"ell": ell, "dofs": system.n_dofs, "kappa": params.kappa, "lambda": params.lambda_P,
            "beta_u": params.beta_u, "iterations": rep.iterations, "residual": rep.residual,
            "seconds": time.perf_counter() - t0, "converged": rep.converged}


def run_precond_sweep(config: CaseConfig) -> PrecondTable:
    """Iteration counts over ``ells x kappa x lambda x beta_u``; writes ``precond.csv``.

    ``lambda`` sets both Lame parameters.  Non-converged runs are kept with
    ``converged = 0``.
    """
    table = PrecondTable()
    for beta in config.sweep_beta_u:
        for kappa in config.sweep_kappa:
            for lam in config.sweep_lambda:
                params = replace(config.params, kappa=kappa, lambda_E=lam, lambda_P=lam, beta_u=beta)
                case = make_case(config, params)
                for ell in config.sweep_ells:
                    table.rows.append(precond_run(case, ell, config.k, config.formulation,
                                                  config.scaling, config.rtol, config.maxit))
    path = _output(config, "precond.csv")
    if path is not None:
        table.write_csv(path)
    return table
