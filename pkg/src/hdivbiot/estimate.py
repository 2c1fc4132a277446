"""Residual a posteriori error estimator.

Cell indicators ``Theta_K`` (elastic cells) and ``Psi_K`` (poroelastic
cells), interface indicators ``Lambda_e`` and the global estimator
``Xi^2 = sum Theta_K^2 + sum Psi_K^2 + sum Lambda_e^2``.

Boundary and interface residuals are measured relative to the data of the
case: Dirichlet jumps use ``u_h - g``, traction and flux residuals subtract
the prescribed traction and flux, and the interface residuals subtract the
traction jump and flux of the manufactured solution (zero without one).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import LAGRANGE_DG, SpaceSpec, eval_basis, evaluate, facet_ref_points
from .forms import (DG_PRESSURE, _chunks, _sym, cell_quadrature, facet_degree, facet_quadrature,
                    penalty_lengths, pressure_dirichlet_facets, volume_degree)
from .mesh import CellTag, FacetTag, write_vtk
from .norms import compute_errors, effectivity_error


@dataclass
class EstimatorReport:
    """Indicators of one discrete solution.

    ``theta``/``psi`` are indexed like ``e_cells``/``p_cells``; ``lam`` like
    ``sigma_facets``.  ``cell_sq`` holds the squared cell indicators on all
    cells (``Theta_K^2`` or ``Psi_K^2``) and ``upsilon`` the data oscillation.
    """

    theta: np.ndarray
    psi: np.ndarray
    lam: np.ndarray
    e_cells: np.ndarray
    p_cells: np.ndarray
    sigma_facets: np.ndarray
    cell_sq: np.ndarray
    xi: float
    upsilon: float
    effectivity: float | None = None
    terms: dict | None = None

    def marking_indicators(self, mesh) -> np.ndarray:
        """Squared cell indicators with each ``Lambda_e^2`` split half to both neighbours."""
        out = self.cell_sq.copy()
        half = 0.5 * self.lam ** 2
        np.add.at(out, mesh.facet_cells[self.sigma_facets, 0], half)
        np.add.at(out, mesh.facet_cells[self.sigma_facets, 1], half)
        return out


def _project_data(mesh, cells, fn, r, X_out_ref):
    """Cell-wise L2 projection onto ``P_r`` evaluated at reference points ``X_out_ref``.

    ``fn(X)`` returns values ``(m, nq)`` or ``(m, nq, d)``.
    """
    space = SpaceSpec(LAGRANGE_DG, r)
    ref, X, W = cell_quadrature(mesh, cells, 2 * r + 8)
    B = eval_basis(space, mesh, cells, ref, 0).values
    vals = np.asarray(fn(X), dtype=float)
    scalar = vals.ndim == 2
    if scalar:
        vals = vals[..., None]
    M = np.einsum("cqn,cqm,cq->cnm", B, B, W)
    rhs = np.einsum("cqn,cqd,cq->cnd", B, vals, W)
    coef = np.linalg.solve(M, rhs)
    Bo = eval_basis(space, mesh, cells, X_out_ref, 0).values
    out = np.einsum("cqn,cnd->cqd", Bo, coef)
    return out[..., 0] if scalar else out


def _stress(U, Z, mu):
    """``2 mu eps(u_h) - phi_h I`` at points; ``mu`` per cell."""
    s = 2.0 * mu[:, None, None, None] * _sym(U.grads)
    s[..., 0, 0] -= Z.values
    s[..., 1, 1] -= Z.values
    return s


def _side_fields(system, sol, facets, side, t, need_p):
    mesh, S = system.mesh, system.spaces
    cells = mesh.facet_cells[facets, side]
    ref = facet_ref_points(mesh, facets, side, t)
    U = evaluate(S.V.space, mesh, S.V, sol.u, cells, ref, 1)
    Z = evaluate(S.Z.space, mesh, S.Z, sol.phi, cells, ref, 0)
    mu = system.params.mu_of(mesh.cell_tag[cells])
    sig = _stress(U, Z, mu)
    P = evaluate(S.Q.space, mesh, S.Q, sol.p, cells, ref, 1) if need_p else None
    return cells, U, sig, P


def estimate(sol, case=None, errors: dict | None = None) -> EstimatorReport:
    """Compute all indicators for a solution.

    The effectivity index is filled in when the case has an exact solution
    (or ``errors`` from :func:`hdivbiot.norms.compute_errors` is given).
    """
    system = sol.system
    case = case if case is not None else system.case
    exact = getattr(case, "exact", None)
    mesh, params, k = system.mesh, system.params, system.k
    S = system.spaces
    beta_u, beta_p = params.penalties(k)
    kap = params.kappa / params.eta
    grav = np.asarray(params.gravity, dtype=float)
    nc = mesh.n_cells
    tags = mesh.cell_tag
    mu_c = params.mu_of(tags)
    lam_c = params.lambda_of(tags)
    hK = mesh.cell_diameters
    he = mesh.facet_lengths
    hp = penalty_lengths(mesh)
    isP = tags == CellTag.P

    terms = {name: np.zeros(nc) for name in
             ("R1", "Re", "jump", "R2", "R3", "flux", "pjump")}
    osc = np.zeros(nc)
    deg = volume_degree(k) + 2
    lp = params.lambda_P
    rho1 = np.minimum(1.0 / (params.c0 + params.alpha ** 2 / (2 * params.mu_P + lp)),
                      hK ** 2 / kap)
    rho_d = 1.0 / (1.0 / params.mu_P + 1.0 / (2 * params.mu_P + lp))

    # cell residuals
    for sl in _chunks(nc):
        cells = np.arange(nc)[sl]
        ref, X, W = cell_quadrature(mesh, cells, deg)
        ctag = np.broadcast_to(tags[cells][:, None], X.shape[:2])
        U = evaluate(S.V.space, mesh, S.V, sol.u, cells, ref, 2)
        Z = evaluate(S.Z.space, mesh, S.Z, sol.phi, cells, ref, 1)
        mu = mu_c[cells]
        H = U.hess
        divsig = mu[:, None, None] * (np.einsum("cqiaa->cqi", H) + np.einsum("cqaia->cqi", H)) - Z.grads
        b = lambda Y: case.body(Y, tags[cells][:, None])  # noqa: E731
        bh = _project_data(mesh, cells, b, k + 1, ref)
        R1 = bh + divsig
        terms["R1"][cells] = hK[cells] ** 2 / mu * np.sum(np.sum(R1 ** 2, -1) * W, -1)
        osc[cells] = hK[cells] ** 2 / mu * np.sum(np.sum((b(X) - bh) ** 2, -1) * W, -1)
        R2 = U.div + Z.values / lam_c[cells][:, None]
        pc = cells[isP[cells]]
        wE = 1.0 / (1.0 / params.mu_E + 1.0 / params.lambda_E)
        r2 = np.sum(R2 ** 2 * W, -1)
        terms["R2"][cells] = np.where(isP[cells], 0.0, wE * r2)
        if len(pc):
            sub = isP[cells]
            P = evaluate(S.Q.space, mesh, S.Q, sol.p, pc, ref, 2)
            R2P = R2[sub] - params.alpha / lp * P.values
            terms["R2"][pc] = rho_d * np.sum(R2P ** 2 * W[sub], -1)
            sh = _project_data(mesh, pc, case.source, k + 1, ref)
            lap = P.hess[..., 0, 0] + P.hess[..., 1, 1]
            R3 = sh - ((params.c0 + params.alpha ** 2 / lp) * P.values
                       - params.alpha / lp * Z.values[sub]) / params.dt + kap * lap
            terms["R3"][pc] = rho1[pc] * np.sum(R3 ** 2 * W[sub], -1)
            osc[pc] += rho1[pc] * np.sum((case.source(X[sub]) - sh) ** 2 * W[sub], -1)

    fdeg = facet_degree(k) + 2
    need_p = lambda f: isP[mesh.facet_cells[f, 0]]  # noqa: E731

    # interior facets within one subdomain
    for tag_f in (FacetTag.INT_E, FacetTag.INT_P):
        facets = mesh.facets_with_tag(tag_f)
        for sl in _chunks(len(facets)):
            f = facets[sl]
            t, X, W = facet_quadrature(mesh, f, fdeg)
            n = mesh.facet_normals[f]
            withp = tag_f == FacetTag.INT_P
            c0, U0, s0, P0 = _side_fields(system, sol, f, 0, t, withp)
            c1, U1, s1, P1 = _side_fields(system, sol, f, 1, t, withp)
            mu = mu_c[c0]
            Re = 0.5 * np.einsum("fqia,fa->fqi", s0 - s1, n)
            re = he[f] / mu * np.sum(np.sum(Re ** 2, -1) * W, -1)
            jp = beta_u * mu / hp[f] * np.sum(np.sum((U0.values - U1.values) ** 2, -1) * W, -1)
            for c in (c0, c1):
                np.add.at(terms["Re"], c, re)
                np.add.at(terms["jump"], c, jp)
            if withp:
                fl = 0.5 * kap * np.einsum("fqa,fa->fq", P0.grads - P1.grads, n)
                v = kap ** -1 * he[f] * np.sum(fl ** 2 * W, -1)
                pj = beta_p * kap / hp[f] * np.sum((P0.values - P1.values) ** 2 * W, -1)
                for c in (c0, c1):
                    np.add.at(terms["flux"], c, v)
                    if system.formulation == DG_PRESSURE:
                        np.add.at(terms["pjump"], c, pj)

    # boundary facets
    for tag_f in (FacetTag.GDIR_E, FacetTag.GDIR_P, FacetTag.GNEU_E, FacetTag.GNEU_P):
        f = mesh.facets_with_tag(tag_f)
        if len(f) == 0:
            continue
        t, X, W = facet_quadrature(mesh, f, fdeg)
        n = mesh.facet_normals[f]
        withp = tag_f in (FacetTag.GDIR_P, FacetTag.GNEU_P)
        c0, U0, s0, P0 = _side_fields(system, sol, f, 0, t, withp)
        mu = mu_c[c0]
        if tag_f in (FacetTag.GDIR_E, FacetTag.GDIR_P):
            g = exact.u(X) if exact is not None else 0.0
            np.add.at(terms["jump"], c0,
                      beta_u * mu / hp[f] * np.sum(np.sum((U0.values - g) ** 2, -1) * W, -1))
            if withp:
                data = kap * np.einsum("fqa,fa->fq", exact.grad_p(X), n) if exact is not None else 0.0
                fl = kap * np.einsum("fqa,fa->fq", P0.grads - grav, n) - data
                np.add.at(terms["flux"], c0, he[f] / kap * np.sum(fl ** 2 * W, -1))
        else:
            tr = np.einsum("fqia,fa->fqi", s0, n)
            if exact is not None:
                ctag = np.broadcast_to(tags[c0][:, None], X.shape[:2])
                tr = tr - np.einsum("fqia,fa->fqi", exact.sigma(X, ctag), n)
            np.add.at(terms["Re"], c0, he[f] / mu * np.sum(np.sum(tr ** 2, -1) * W, -1))
            if withp and system.formulation == DG_PRESSURE:
                g = exact.p(X) if exact is not None else 0.0
                np.add.at(terms["pjump"], c0,
                          beta_p * kap / hp[f] * np.sum((P0.values - g) ** 2 * W, -1))

    # interface facets
    fS = mesh.facets_with_tag(FacetTag.SIGMA)
    lam = np.zeros(len(fS))
    if len(fS):
        t, X, W = facet_quadrature(mesh, fS, fdeg)
        n = mesh.facet_normals[fS]
        cP, UP, sP, PP = _side_fields(system, sol, fS, 0, t, True)
        cE, UE, sE, _ = _side_fields(system, sol, fS, 1, t, False)
        RS = np.einsum("fqia,fa->fqi", sE - sP, n)
        fl = kap * np.einsum("fqa,fa->fq", PP.grads - grav, n)
        if exact is not None:
            RS -= np.einsum("fqia,fa->fqi", exact.sigma(X, np.full(X.shape[:2], CellTag.E))
                            - exact.sigma(X, np.full(X.shape[:2], CellTag.P)), n)
            fl -= kap * np.einsum("fqa,fa->fq", exact.grad_p(X), n)
        lam2 = (he[fS] / (params.mu_E + params.mu_P) * np.sum(np.sum(RS ** 2, -1) * W, -1)
                + he[fS] / kap * np.sum(fl ** 2 * W, -1)
                + beta_u * params.mu0 / hp[fS] * np.sum(np.sum((UP.values - UE.values) ** 2, -1) * W, -1))
        lam = np.sqrt(lam2)

    cell_sq = sum(terms.values())
    e_cells = np.flatnonzero(~isP)
    p_cells = np.flatnonzero(isP)
    xi = float(np.sqrt(cell_sq.sum() + np.sum(lam ** 2)))
    report = EstimatorReport(np.sqrt(cell_sq[e_cells]), np.sqrt(cell_sq[p_cells]), lam, e_cells,
                             p_cells, fS, cell_sq, xi, float(np.sqrt(osc.sum())), None, terms)
    if errors is None and exact is not None:
        errors = compute_errors(sol, exact)
    if errors is not None and xi > 0:
        report.effectivity = effectivity_error(errors, system.formulation) / xi
    return report


def write_indicator_vtk(path, mesh, report: EstimatorReport) -> None:
    """VTK file with the cell indicators (``Theta_K``/``Psi_K``) as cell data."""
    write_vtk(path, mesh, cell_data={"indicator": np.sqrt(report.cell_sq),
                                     "marking": np.sqrt(report.marking_indicators(mesh))})
