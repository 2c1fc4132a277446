"""Dörfler marking and the solve-estimate-mark-refine-smooth loop."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .estimate import estimate, write_indicator_vtk
from .exceptions import AllZero
from .mesh import Mesh, build_mesh, laplacian_smooth, refine
from .norms import compute_errors, rates_dofs
from .solve import solve_direct, solve_minres
from .system import apply_scaling, build_system

SPLIT_MARKING = "split"
FACET_MARKING = "facet"
TRACE_COLUMNS = ("step", "dofs", "e_u", "e_p", "e_phi", "xi", "eff", "marked", "seconds")


def dorfler_mark(indicators, zeta: float) -> np.ndarray:
    """Smallest set of cells whose squared indicators reach ``zeta`` of the total.

    ``indicators`` are the (non-squared) cell values.  Cells are taken in
    decreasing order, ties by lower index.  Returns sorted cell indices.
    """
    eta = np.asarray(indicators, dtype=float)
    if not 0.0 < zeta <= 1.0:
        raise ValueError("zeta must lie in (0, 1]")
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("indicators must be finite and non-negative")
    sq = eta ** 2
    if sq.sum() <= 0.0:
        raise AllZero("all indicators vanish")
    order = np.lexsort((np.arange(len(eta)), -sq))
    csum = np.cumsum(sq[order])
    n = int(np.searchsorted(csum, zeta * csum[-1], side="left")) + 1
    return np.sort(order[:n])


@dataclass
class TraceRow:
    step: int
    dofs: int
    e_u: float
    e_p: float
    e_phi: float
    xi: float
    eff: float
    marked: int
    seconds: float
    triple: float = float("nan")
    marked_cells: np.ndarray | None = field(default=None, repr=False)
    centroids: np.ndarray | None = field(default=None, repr=False)


@dataclass
class AdaptiveTrace:
    rows: list = field(default_factory=list)
    meshes: list = field(default_factory=list)

    @property
    def dofs(self) -> np.ndarray:
        return np.array([r.dofs for r in self.rows])

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def rates(self, name="triple") -> np.ndarray:
        return rates_dofs(self.column(name), self.dofs)

    def write_csv(self, path) -> None:
        write_table(path, TRACE_COLUMNS, [[getattr(r, c) for c in TRACE_COLUMNS] for r in self.rows])


def write_table(path, header, rows) -> None:
    """CSV with a header row; floats in ``%.6e``, integers verbatim."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if v is None:
        return "nan"
    return "%.6e" % float(v)


def mark_cells(report, mesh: Mesh, zeta: float, marking: str = SPLIT_MARKING) -> np.ndarray:
    """Cells to refine from an estimator report.

    ``SPLIT_MARKING`` adds half of each ``Lambda_e^2`` to both neighbouring
    cells and marks cells.  ``FACET_MARKING`` marks over the union of cell
    and interface indicators and refines both neighbours of a marked facet.
    """
    if marking == SPLIT_MARKING:
        return dorfler_mark(np.sqrt(report.marking_indicators(mesh)), zeta)
    if marking != FACET_MARKING:
        raise ValueError(f"unknown marking {marking!r}")
    nc = mesh.n_cells
    chosen = dorfler_mark(np.concatenate([np.sqrt(report.cell_sq), report.lam]), zeta)
    cells = chosen[chosen < nc]
    facets = report.sigma_facets[chosen[chosen >= nc] - nc]
    return np.unique(np.concatenate([cells, mesh.facet_cells[facets].ravel()]))


def solve_case(mesh: Mesh, case, k: int, formulation: str, solver: str = "direct",
               scaling: bool = True, rtol: float = 1e-6, maxit: int = 500):
    """Build, optionally scale, and solve; returns ``(Solution, SolveReport)``."""
    params = case.params.with_penalties(k)
    system = build_system(mesh, params, formulation, case, k)
    if scaling:
        system = apply_scaling(system)
    if solver == "direct":
        return solve_direct(system)
    if solver == "pminres":
        return solve_minres(system, rtol=rtol, maxit=maxit)
    raise ValueError(f"unknown solver {solver!r}")


def adaptive_loop(case, zeta: float, max_steps: int, smoothing: bool = True, resolution: int = 2,
                  k: int | None = None, formulation: str | None = None, mesh: Mesh | None = None,
                  uniform: bool = False, vtk_dir=None, solver: str = "direct",
                  marking: str = SPLIT_MARKING) -> AdaptiveTrace:
    """Adaptive refinement driven by the estimator.

    Each step solves, estimates, marks with :func:`dorfler_mark` on the
    cell indicators (see :func:`mark_cells` for the treatment of interface
    indicators), refines and optionally smooths.  ``uniform=True`` marks
    every cell.
    """
    k = case.k if k is None else k
    formulation = case.formulation if formulation is None else formulation
    mesh = mesh if mesh is not None else build_mesh(case.geometry, resolution)
    trace = AdaptiveTrace()
    for step in range(max_steps):
        t0 = time.perf_counter()
        sol, _ = solve_case(mesh, case, k, formulation, solver)
        errors = compute_errors(sol) if case.exact is not None else None
        rep = estimate(sol, case, errors)
        try:
            marked = np.arange(mesh.n_cells) if uniform else mark_cells(rep, mesh, zeta, marking)
        except AllZero:
            marked = np.zeros(0, dtype=np.int64)
        e = errors or {}
        trace.rows.append(TraceRow(step, sol.system.n_dofs, e.get("e_u", np.nan),
                                   e.get("e_p_star" if formulation == "DG_PRESSURE" else "e_p", np.nan),
                                   e.get("e_phi", np.nan), rep.xi,
                                   rep.effectivity if rep.effectivity is not None else np.nan,
                                   len(marked), time.perf_counter() - t0,
                                   e.get("triple", np.nan), marked, mesh.centroids[marked]))
        trace.meshes.append(mesh)
        if vtk_dir is not None:
            write_indicator_vtk(f"{vtk_dir}/adapt_step{step:02d}.vtk", mesh, rep)
        if len(marked) == 0 or step == max_steps - 1:
            break
        mesh = refine(mesh, marked)
        if smoothing:
            mesh = laplacian_smooth(mesh)
    return trace
