"""Error norms against an exact solution and experimental convergence rates."""
from __future__ import annotations

import numpy as np

from .elements import evaluate
from .forms import (CG_PRESSURE, DG_PRESSURE, _chunks, _sym, cell_quadrature,
                    displacement_dirichlet_facets, facet_degree, facet_quadrature,
                    interior_facets, penalty_lengths, volume_degree)
from .elements import facet_ref_points
from .mesh import CellTag, FacetTag


def _displacement_jumps(sol, exact, k, beta_u):
    """Weighted jump part of the broken energy norm of ``u - u_h``."""
    system = sol.system
    mesh, params, V = system.mesh, system.params, system.spaces.V
    facets = np.concatenate([interior_facets(mesh), displacement_dirichlet_facets(mesh)])
    total = 0.0
    hpen = penalty_lengths(mesh)
    for sl in _chunks(len(facets)):
        f = facets[sl]
        t, X, W = facet_quadrature(mesh, f, facet_degree(k) + 2)
        c0 = mesh.facet_cells[f, 0]
        u0 = evaluate(V.space, mesh, V, sol.u, c0, facet_ref_points(mesh, f, 0, t)).values
        inner = mesh.facet_cells[f, 1] >= 0
        jump = u0.copy()
        if inner.any():
            c1 = mesh.facet_cells[f[inner], 1]
            u1 = evaluate(V.space, mesh, V, sol.u, c1, facet_ref_points(mesh, f[inner], 1, t)).values
            jump[inner] -= u1
        if (~inner).any():
            jump[~inner] -= exact.u(X[~inner])
        mu = params.mu_of(mesh.cell_tag[c0])
        mu = np.where(mesh.facet_tag[f] == FacetTag.SIGMA, params.mu0, mu)
        total += np.sum((2.0 * mu * beta_u / hpen[f])[:, None] * np.sum(jump ** 2, axis=-1) * W)
    return total


def _pressure_jumps(sol, k, beta_p):
    """``sum beta_p/h_e ||[[(kappa/eta) p_h n]]||^2`` over interior poroelastic facets."""
    system = sol.system
    mesh, params, Q = system.mesh, system.params, system.spaces.Q
    f = mesh.facets_with_tag(FacetTag.INT_P)
    if len(f) == 0:
        return 0.0
    t, X, W = facet_quadrature(mesh, f, facet_degree(k) + 2)
    p0 = evaluate(Q.space, mesh, Q, sol.p, mesh.facet_cells[f, 0], facet_ref_points(mesh, f, 0, t)).values
    p1 = evaluate(Q.space, mesh, Q, sol.p, mesh.facet_cells[f, 1], facet_ref_points(mesh, f, 1, t)).values
    kap = params.kappa / params.eta
    return float(np.sum((beta_p / penalty_lengths(mesh)[f])[:, None] * (kap * (p0 - p1)) ** 2 * W))


def compute_errors(sol, exact=None) -> dict:
    """Error components of a discrete solution.

    Returns a dict with the squared-free quantities ``e_u`` (broken energy
    norm including jumps), ``e_p`` = ``(c0 + alpha^2/lambda_P)||p - p_h|| +
    (kappa/eta)||grad(p - p_h)||``, ``e_p_star`` (the same with the
    broken-gradient star norm), ``e_phi`` = ``||.||_E / mu_E + ||.||_P / mu_P``,
    the triple norm ``triple`` (with ``triple_star`` for discontinuous
    pressure) and plain ``L2``/``H1`` pieces.
    """
    system = sol.system
    exact = exact if exact is not None else system.case.exact
    mesh, params, k = system.mesh, system.params, system.k
    S = system.spaces
    beta_u, beta_p = params.penalties(k)
    deg = volume_degree(k) + 4
    acc = dict(eps=0.0, phi_w=0.0, phi_E=0.0, phi_P=0.0, lam_E=0.0, lam_P=0.0, p_l2=0.0,
               p_grad=0.0, u_l2=0.0, u_h1=0.0)
    for sl in _chunks(mesh.n_cells):
        cells = np.arange(mesh.n_cells)[sl]
        ref, X, W = cell_quadrature(mesh, cells, deg)
        tags = np.broadcast_to(mesh.cell_tag[cells][:, None], X.shape[:2])
        U = evaluate(S.V.space, mesh, S.V, sol.u, cells, ref, 1)
        Z = evaluate(S.Z.space, mesh, S.Z, sol.phi, cells, ref, 0)
        gu = exact.grad_u(X) - U.grads
        mu = params.mu_of(mesh.cell_tag[cells])[:, None]
        lam = params.lambda_of(mesh.cell_tag[cells])[:, None]
        acc["eps"] += np.sum(2.0 * mu * np.sum(_sym(gu) ** 2, axis=(-1, -2)) * W)
        acc["u_l2"] += np.sum(np.sum((exact.u(X) - U.values) ** 2, axis=-1) * W)
        acc["u_h1"] += np.sum(np.sum(gu ** 2, axis=(-1, -2)) * W)
        ephi = exact.phi(X, tags) - Z.values
        isE = (mesh.cell_tag[cells] == CellTag.E)[:, None]
        acc["phi_w"] += np.sum(ephi ** 2 / (2.0 * mu) * W)
        acc["phi_E"] += np.sum(np.where(isE, ephi ** 2, 0.0) * W)
        acc["phi_P"] += np.sum(np.where(isE, 0.0, ephi ** 2) * W)
        acc["lam_E"] += np.sum(np.where(isE, ephi ** 2 / lam, 0.0) * W)
    qc = S.Q.cells
    for sl in _chunks(len(qc)):
        cells = qc[sl]
        ref, X, W = cell_quadrature(mesh, cells, deg)
        P = evaluate(S.Q.space, mesh, S.Q, sol.p, cells, ref, 1)
        Z = evaluate(S.Z.space, mesh, S.Z, sol.phi, cells, ref, 0)
        ep = exact.p(X) - P.values
        ephi = exact.phi(X, np.full(X.shape[:2], CellTag.P)) - Z.values
        acc["p_l2"] += np.sum(ep ** 2 * W)
        acc["p_grad"] += np.sum(np.sum((exact.grad_p(X) - P.grads) ** 2, axis=-1) * W)
        acc["lam_P"] += np.sum((ephi - params.alpha * ep) ** 2 / params.lambda_P * W)
    jumps = _displacement_jumps(sol, exact, k, beta_u)
    kap = params.kappa / params.eta
    e_u2 = acc["eps"] + jumps
    e_p = (params.c0 + params.alpha ** 2 / params.lambda_P) * np.sqrt(acc["p_l2"]) \
        + kap * np.sqrt(acc["p_grad"])
    pj = _pressure_jumps(sol, k, beta_p) if system.formulation == DG_PRESSURE else 0.0
    p_star2 = kap ** 2 * acc["p_grad"] + pj
    e_p_star = (params.c0 + params.alpha ** 2 / params.lambda_P) * np.sqrt(acc["p_l2"]) + np.sqrt(p_star2)
    e_phi = np.sqrt(acc["phi_E"]) / params.mu_E + np.sqrt(acc["phi_P"]) / params.mu_P
    common = e_u2 + acc["phi_w"] + acc["lam_E"] + acc["lam_P"] + params.c0 * acc["p_l2"]
    triple = np.sqrt(common + kap ** 2 * acc["p_grad"])
    triple_star = np.sqrt(common + p_star2)
    return {
        "e_u": float(np.sqrt(e_u2)),
        "e_p": float(e_p),
        "e_p_star": float(e_p_star),
        "e_phi": float(e_phi),
        "triple": float(triple),
        "triple_star": float(triple_star),
        "u_L2": float(np.sqrt(acc["u_l2"])),
        "u_H1": float(np.sqrt(acc["u_h1"])),
        "p_L2": float(np.sqrt(acc["p_l2"])),
        "p_H1": float(np.sqrt(acc["p_grad"])),
        "phi_L2": float(np.sqrt(acc["phi_E"] + acc["phi_P"])),
    }


def effectivity_error(errors: dict, formulation: str = CG_PRESSURE) -> float:
    """``(e_u^2 + e_p^2 + e_phi^2)^(1/2)`` with the starred pressure error for DG."""
    ep = errors["e_p_star"] if formulation == DG_PRESSURE else errors["e_p"]
    return float(np.sqrt(errors["e_u"] ** 2 + ep ** 2 + errors["e_phi"] ** 2))


def rates_h(errors, h) -> np.ndarray:
    """``log(e/e~) / log(h/h~)`` between consecutive entries."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    return np.log(e[1:] / e[:-1]) / np.log(h[1:] / h[:-1])


def rates_dofs(errors, dofs) -> np.ndarray:
    """``-2 log(e/e~) / log(N/N~)`` between consecutive entries."""
    e = np.asarray(errors, dtype=float)
    n = np.asarray(dofs, dtype=float)
    return -2.0 * np.log(e[1:] / e[:-1]) / np.log(n[1:] / n[:-1])


def discrete_inf_sup(mesh, params, k: int = 0, drop_constants: bool | None = None) -> float:
    """Smallest generalised singular value of ``b1`` (dense computation).

    Displacements are measured in ``||sqrt(2 mu) v||^2 + ||v||_*^2`` on the
    constrained space, total pressures in ``||psi / sqrt(2 mu)||``.  When the
    whole boundary is displacement-Dirichlet the constant total pressure is
    not reachable and is excluded (``drop_constants=None`` decides this
    from the mesh).
    """
    import scipy.linalg as sla

    from .forms import (assemble_ahat1, assemble_b1, assemble_vector_mass, assemble_riesz_phi,
                        displacement_neumann_facets, spaces)
    from dataclasses import replace

    S = spaces(mesh, k)
    free = np.setdiff1d(np.arange(S.V.n_dofs), S.V.constrained)
    X = (assemble_ahat1(mesh, params, k) + assemble_vector_mass(mesh, params, k))[free][:, free].toarray()
    B = assemble_b1(mesh, params, k)[:, free].toarray()
    # (1/(2 mu)) mass: the Riesz block with lambda -> infinity
    Y = assemble_riesz_phi(mesh, replace(params, lambda_E=np.inf, lambda_P=np.inf), k).toarray()
    Sm = B @ np.linalg.solve(X, B.T)
    ev = np.sort(np.clip(sla.eigh(0.5 * (Sm + Sm.T), Y, eigvals_only=True), 0.0, None))
    if drop_constants is None:
        drop_constants = len(displacement_neumann_facets(mesh)) == 0
    return float(np.sqrt(ev[1] if drop_constants else ev[0]))
