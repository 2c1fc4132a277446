"""Cell and facet assembly of the bilinear and linear forms.

All matrices are returned as ``scipy.sparse.csr_matrix`` with rows indexed
by test functions and columns by trial functions.  The finite element
spaces for a mesh and order ``k`` are

* ``V``: BDM of degree ``k + 1`` (displacement),
* ``Q``: Lagrange of degree ``k + 1`` on the poroelastic cells, continuous
  (``CG_PRESSURE``) or discontinuous (``DG_PRESSURE``),
* ``Z``: discontinuous ``P_k`` on all cells (total pressure).

Boundary convention: displacement-Dirichlet facets (``GDIR_*``) carry the
no-flux condition for the fluid pressure and displacement-Neumann facets
(``GNEU_*``) carry the pressure Dirichlet condition.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ._core import kernels
from .elements import (BDM_HDIV, LAGRANGE_CG, LAGRANGE_DG, P_ONLY, WHOLE, DofMap, SpaceSpec,
                       build_dofmap, cg_dofs_on_facets, eval_basis, facet_points, facet_ref_points,
                       interpolate, map_points)
from .exceptions import MissingData
from .mesh import CellTag, FacetTag, Mesh
from .quadrature import interval_rule, triangle_rule

CG_PRESSURE = "CG_PRESSURE"
DG_PRESSURE = "DG_PRESSURE"

_CHUNK = 4096


@dataclass(frozen=True)
class ModelParameters:
    """Physical and penalty coefficients.

    ``beta_u`` and ``beta_p`` default to ``2.5 * 10**(2k + 1)`` when left
    as ``None`` (see :meth:`penalties`).
    """

    mu_E: float = 20.0
    mu_P: float = 10.0
    lambda_E: float = 1e4
    lambda_P: float = 2e4
    alpha: float = 1.0
    c0: float = 1.0
    kappa: float = 1.0
    eta: float = 1.0
    dt: float = 1.0
    beta_u: float | None = None
    beta_p: float | None = None
    gravity: tuple = (0.0, 0.0)

    def __post_init__(self):
        for name in ("mu_E", "mu_P", "lambda_E", "lambda_P", "kappa", "eta", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c0 < 0:
            raise ValueError("c0 must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("beta_u", "beta_p"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def mu0(self) -> float:
        return max(self.mu_E, self.mu_P)

    def penalties(self, k: int) -> tuple[float, float]:
        default = 2.5 * 10.0 ** (2 * k + 1)
        return (self.beta_u if self.beta_u is not None else default,
                self.beta_p if self.beta_p is not None else default)

    def with_penalties(self, k: int) -> "ModelParameters":
        bu, bp = self.penalties(k)
        return replace(self, beta_u=bu, beta_p=bp)

    def mu_of(self, tags) -> np.ndarray:
        return np.where(np.asarray(tags) == CellTag.E, self.mu_E, self.mu_P)

    def lambda_of(self, tags) -> np.ndarray:
        return np.where(np.asarray(tags) == CellTag.E, self.lambda_E, self.lambda_P)

    @staticmethod
    def from_young(E_E, nu_E, E_P, nu_P, **kw) -> "ModelParameters":
        def lame(E, nu):
            return E / (2 * (1 + nu)), E * nu / ((1 + nu) * (1 - 2 * nu))
        mu_E, lam_E = lame(E_E, nu_E)
        mu_P, lam_P = lame(E_P, nu_P)
        return ModelParameters(mu_E=mu_E, mu_P=mu_P, lambda_E=lam_E, lambda_P=lam_P, **kw)


# ----------------------------------------------------------------------
# spaces and quadrature


@dataclass(frozen=True, eq=False)
class Spaces:
    k: int
    formulation: str
    V: DofMap
    Q: DofMap
    Z: DofMap


def spaces(mesh: Mesh, k: int, formulation: str = CG_PRESSURE) -> Spaces:
    """DoF maps of the three discrete spaces (cached on the mesh)."""
    if formulation not in (CG_PRESSURE, DG_PRESSURE):
        raise ValueError(f"unknown formulation {formulation!r}")
    key = ("spaces", k, formulation)
    if key not in mesh._cache:
        fam = LAGRANGE_CG if formulation == CG_PRESSURE else LAGRANGE_DG
        mesh._cache[key] = Spaces(
            k, formulation,
            build_dofmap(SpaceSpec(BDM_HDIV, k + 1), mesh),
            build_dofmap(SpaceSpec(fam, k + 1, P_ONLY), mesh),
            build_dofmap(SpaceSpec(LAGRANGE_DG, k, WHOLE), mesh),
        )
    return mesh._cache[key]


def volume_degree(k: int) -> int:
    return 2 * (k + 2)


def facet_degree(k: int) -> int:
    return 2 * (k + 2) + 1


def cell_quadrature(mesh: Mesh, cells: np.ndarray, degree: int):
    """Reference points, physical points ``(m, nq, 2)`` and weights ``(m, nq)``."""
    q = triangle_rule(degree)
    X = map_points(mesh, cells, q.points)
    W = q.weights[None, :] * (2.0 * mesh.areas[cells])[:, None]
    return q.points, X, W


def facet_quadrature(mesh: Mesh, facets: np.ndarray, degree: int):
    """Facet parameters ``t``, physical points ``(f, nq, 2)`` and weights ``(f, nq)``."""
    q = interval_rule(degree)
    t = q.points[:, 0]
    X = facet_points(mesh, facets, t)
    W = q.weights[None, :] * mesh.facet_lengths[facets][:, None]
    return t, X, W


PENALTY_LENGTH = "normal"


def penalty_lengths(mesh: Mesh, kind: str | None = None) -> np.ndarray:
    """Facet length scale ``h_e`` used in the penalty weights.

    ``"facet"``: facet diameter.  ``"normal"``: the smallest height
    ``2|K|/|e|`` of the incident cells over the facet, which keeps the penalty
    sufficient on stretched cells.
    """
    kind = kind or PENALTY_LENGTH
    if kind == "facet":
        return mesh.facet_lengths
    fc = mesh.facet_cells
    hgt = 2.0 * mesh.areas[fc] / mesh.facet_lengths[:, None]
    return np.where(fc[:, 1] >= 0, np.minimum(hgt[:, 0], hgt[:, 1]), hgt[:, 0])


def _chunks(n: int, size: int = _CHUNK):
    for s in range(0, n, size):
        yield slice(s, min(n, s + size))


def _sym(g):
    return 0.5 * (g + np.swapaxes(g, -1, -2))


# ----------------------------------------------------------------------
# sparse assembly


class MatrixBuilder:
    """Collects dense local blocks and scatters them into a CSR pattern.

    The pattern is the union of all block positions; values are summed in
    the order the blocks were added, so assembly is deterministic.
    """

    def __init__(self, shape):
        self.shape = tuple(int(s) for s in shape)
        self.blocks = []

    def add(self, rows, cols, values):
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        cols = np.ascontiguousarray(cols, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=float)
        if len(rows):
            self.blocks.append((rows, cols, values))

    def tocsr(self) -> sp.csr_matrix:
        nr, nc = self.shape
        if not self.blocks:
            return sp.csr_matrix(self.shape)
        r = np.concatenate([np.repeat(b[0], b[1].shape[1], axis=1).ravel() for b in self.blocks])
        c = np.concatenate([np.tile(b[1], (1, b[0].shape[1])).ravel() for b in self.blocks])
        pattern = sp.csr_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=self.shape)
        pattern.sum_duplicates()
        pattern.sort_indices()
        indptr = pattern.indptr.astype(np.int32)
        indices = pattern.indices.astype(np.int32)
        data = np.zeros(len(indices))
        for rows, cols, values in self.blocks:
            kernels.scatter_add(indptr, indices, data, rows, cols, values)
        return sp.csr_matrix((data, indices, indptr), shape=self.shape)


def _vector_add(out, dofs, values):
    np.add.at(out, dofs.ravel(), values.ravel())


# ----------------------------------------------------------------------
# facet sets


def interior_facets(mesh: Mesh) -> np.ndarray:
    return np.flatnonzero(mesh.facet_cells[:, 1] >= 0)


def displacement_dirichlet_facets(mesh: Mesh) -> np.ndarray:
    return mesh.facets_with_tag(FacetTag.GDIR_E, FacetTag.GDIR_P)


def displacement_neumann_facets(mesh: Mesh) -> np.ndarray:
    return mesh.facets_with_tag(FacetTag.GNEU_E, FacetTag.GNEU_P)


def pressure_dirichlet_facets(mesh: Mesh) -> np.ndarray:
    return mesh.facets_with_tag(FacetTag.GNEU_P)


def pressure_flux_facets(mesh: Mesh) -> np.ndarray:
    """Facets where the fluid flux enters ``G``: P-side Dirichlet boundary and the interface."""
    return mesh.facets_with_tag(FacetTag.GDIR_P, FacetTag.SIGMA)


# ----------------------------------------------------------------------
# displacement forms


def _vector_side(mesh, V: DofMap, facets, side, t, order=1):
    cells = mesh.facet_cells[facets, side]
    rows = V.cell_row[cells]
    B = eval_basis(V.space, mesh, cells, facet_ref_points(mesh, facets, side, t), order,
                   V.cell_signs[rows])
    return B, V.cell_dofs[rows]


def _scalar_side(mesh, Q: DofMap, facets, side, t, order=1):
    cells = mesh.facet_cells[facets, side]
    rows = Q.cell_row[cells]
    B = eval_basis(Q.space, mesh, cells, facet_ref_points(mesh, facets, side, t), order,
                   Q.cell_signs[rows])
    return B, Q.cell_dofs[rows]


def _facet_jump_data_vector(mesh, params, V, facets, t, beta):
    """Per-facet arrays for the SIP displacement terms.

    Returns ``(dofs, J, A, pen)`` with ``J = [[v (x) n]]`` of each local
    function, ``A = {mu eps(v)}`` and the penalty weight ``2 beta mu_f / h_e``.
    """
    n = mesh.facet_normals[facets]
    h = penalty_lengths(mesh)[facets]
    c0 = mesh.facet_cells[facets, 0]
    mu_c0 = params.mu_of(mesh.cell_tag[c0])
    B0, d0 = _vector_side(mesh, V, facets, 0, t)
    interior = mesh.facet_cells[facets, 1] >= 0
    if np.all(interior):
        B1, d1 = _vector_side(mesh, V, facets, 1, t)
        c1 = mesh.facet_cells[facets, 1]
        mu_c1 = params.mu_of(mesh.cell_tag[c1])
        vals = np.concatenate([B0.values, -B1.values], axis=2)
        A = np.concatenate([0.5 * mu_c0[:, None, None, None, None] * _sym(B0.grads),
                            0.5 * mu_c1[:, None, None, None, None] * _sym(B1.grads)], axis=2)
        dofs = np.concatenate([d0, d1], axis=1)
        sigma = mesh.facet_tag[facets] == FacetTag.SIGMA
        mu_f = np.where(sigma, params.mu0, mu_c0)
    else:
        assert not np.any(interior)
        vals = B0.values
        A = mu_c0[:, None, None, None, None] * _sym(B0.grads)
        dofs = d0
        mu_f = mu_c0
    J = vals[..., :, None] * n[:, None, None, None, :]
    return dofs, J, A, 2.0 * beta * mu_f / h


def _a1_volume(mesh, params, V, k, builder):
    q = triangle_rule(volume_degree(k))
    for sl in _chunks(mesh.n_cells):
        cells = np.arange(mesh.n_cells)[sl]
        B = eval_basis(V.space, mesh, cells, q.points, 1, V.cell_signs[cells])
        e = _sym(B.grads)
        W = q.weights[None, :] * (2.0 * mesh.areas[cells])[:, None]
        mu = params.mu_of(mesh.cell_tag[cells])
        loc = 2.0 * mu[:, None, None] * np.einsum("cqnij,cqmij,cq->cnm", e, e, W)
        builder.add(V.cell_dofs[cells], V.cell_dofs[cells], loc)


def _a1_facets(mesh, params, V, k, builder, consistency, facets):
    beta = params.penalties(k)[0]
    for group in (facets[mesh.facet_cells[facets, 1] >= 0], facets[mesh.facet_cells[facets, 1] < 0]):
        for sl in _chunks(len(group)):
            f = group[sl]
            t, _, W = facet_quadrature(mesh, f, facet_degree(k))
            dofs, J, A, pen = _facet_jump_data_vector(mesh, params, V, f, t, beta)
            loc = pen[:, None, None] * np.einsum("fqnia,fqmia,fq->fnm", J, J, W)
            if consistency:
                c = np.einsum("fqnia,fqmia,fq->fnm", J, A, W)
                loc -= 2.0 * (c + np.swapaxes(c, 1, 2))
            builder.add(dofs, dofs, loc)


def _sip_facets(mesh):
    return np.concatenate([interior_facets(mesh), displacement_dirichlet_facets(mesh)])


def assemble_a1h(mesh: Mesh, params: ModelParameters, k: int, consistency: bool = True) -> sp.csr_matrix:
    """Symmetric interior penalty elasticity form on the BDM space.

    Facet terms act on all interior facets (interface included) and on
    displacement-Dirichlet boundary facets; the penalty weight is ``mu``
    off the interface and ``mu0 = max(mu_E, mu_P)`` on it.
    """
    V = spaces(mesh, k).V
    b = MatrixBuilder((V.n_dofs, V.n_dofs))
    _a1_volume(mesh, params, V, k, b)
    _a1_facets(mesh, params, V, k, b, consistency, _sip_facets(mesh))
    return b.tocsr()


def assemble_ahat1(mesh: Mesh, params: ModelParameters, k: int) -> sp.csr_matrix:
    """Volume plus penalty part of :func:`assemble_a1h` (the broken energy norm operator)."""
    return assemble_a1h(mesh, params, k, consistency=False)


# ----------------------------------------------------------------------
# pressure forms


def _scalar_volume(mesh, dm_row: DofMap, dm_col: DofMap, cells, degree, kind, weight):
    """Mass (``kind='mass'``) or stiffness (``'grad'``) matrix weighted per cell."""
    b = MatrixBuilder((dm_row.n_dofs, dm_col.n_dofs))
    q = triangle_rule(degree)
    order = 1 if kind == "grad" else 0
    for sl in _chunks(len(cells)):
        c = cells[sl]
        rr, rc = dm_row.cell_row[c], dm_col.cell_row[c]
        W = q.weights[None, :] * (2.0 * mesh.areas[c])[:, None] * np.asarray(weight)[sl][:, None]
        Br = eval_basis(dm_row.space, mesh, c, q.points, order, dm_row.cell_signs[rr])
        same = dm_row is dm_col
        Bc = Br if same else eval_basis(dm_col.space, mesh, c, q.points, order, dm_col.cell_signs[rc])
        if kind == "grad":
            loc = np.einsum("cqna,cqma,cq->cnm", Br.grads, Bc.grads, W)
        else:
            loc = np.einsum("cqn,cqm,cq->cnm", Br.values, Bc.values, W)
        b.add(dm_row.cell_dofs[rr], dm_col.cell_dofs[rc], loc)
    return b.tocsr()


def assemble_a2_cg(mesh: Mesh, params: ModelParameters, k: int = 0) -> sp.csr_matrix:
    """``(kappa/eta) (grad p, grad q)`` on the poroelastic cells (continuous pressure)."""
    Q = spaces(mesh, k, CG_PRESSURE).Q
    cells = Q.cells
    w = np.full(len(cells), params.kappa / params.eta)
    return _scalar_volume(mesh, Q, Q, cells, volume_degree(k), "grad", w)


def assemble_a2h_dg(mesh: Mesh, params: ModelParameters, k: int) -> sp.csr_matrix:
    """SIP discretisation of ``(kappa/eta) grad p . grad q`` for discontinuous pressure.

    Facet terms act on interior poroelastic facets and on pressure-Dirichlet
    boundary facets.
    """
    Q = spaces(mesh, k, DG_PRESSURE).Q
    kap = params.kappa / params.eta
    beta = params.penalties(k)[1]
    vol = _scalar_volume(mesh, Q, Q, Q.cells, volume_degree(k), "grad", np.full(len(Q.cells), kap))
    b = MatrixBuilder((Q.n_dofs, Q.n_dofs))
    for group in (mesh.facets_with_tag(FacetTag.INT_P), pressure_dirichlet_facets(mesh)):
        for sl in _chunks(len(group)):
            f = group[sl]
            t, _, W = facet_quadrature(mesh, f, facet_degree(k))
            dofs, J, A = _scalar_jump_data(mesh, Q, f, t)
            h = penalty_lengths(mesh)[f]
            loc = (beta * kap / h)[:, None, None] * np.einsum("fqna,fqma,fq->fnm", J, J, W)
            c = kap * np.einsum("fqna,fqma,fq->fnm", J, A, W)
            loc -= c + np.swapaxes(c, 1, 2)
            b.add(dofs, dofs, loc)
    return (vol + b.tocsr()).tocsr()


def _scalar_jump_data(mesh, Q, facets, t):
    """``[[q n]]`` and ``{grad q}`` for every local function on the facets."""
    n = mesh.facet_normals[facets]
    B0, d0 = _scalar_side(mesh, Q, facets, 0, t)
    if np.all(mesh.facet_cells[facets, 1] >= 0):
        B1, d1 = _scalar_side(mesh, Q, facets, 1, t)
        vals = np.concatenate([B0.values, -B1.values], axis=2)
        A = 0.5 * np.concatenate([B0.grads, B1.grads], axis=2)
        dofs = np.concatenate([d0, d1], axis=1)
    else:
        vals, A, dofs = B0.values, B0.grads, d0
    return dofs, vals[..., None] * n[:, None, None, :], A


def assemble_b1(mesh: Mesh, params: ModelParameters | None = None, k: int = 0) -> sp.csr_matrix:
    """``-(psi, div v)``: rows total-pressure DoFs, columns displacement DoFs."""
    S = spaces(mesh, k)
    V, Z = S.V, S.Z
    b = MatrixBuilder((Z.n_dofs, V.n_dofs))
    q = triangle_rule(volume_degree(k))
    for sl in _chunks(mesh.n_cells):
        c = np.arange(mesh.n_cells)[sl]
        W = q.weights[None, :] * (2.0 * mesh.areas[c])[:, None]
        Bv = eval_basis(V.space, mesh, c, q.points, 1, V.cell_signs[c])
        Bz = eval_basis(Z.space, mesh, c, q.points, 0)
        loc = -np.einsum("cqn,cqm,cq->cnm", Bz.values, Bv.div, W)
        b.add(Z.cell_dofs[c], V.cell_dofs[c], loc)
    return b.tocsr()


def assemble_b2(mesh: Mesh, params: ModelParameters, k: int = 0,
                formulation: str = CG_PRESSURE) -> sp.csr_matrix:
    """``(alpha/lambda_P)(p, psi)`` on the poroelastic cells: rows Z, columns Q."""
    S = spaces(mesh, k, formulation)
    w = np.full(len(S.Q.cells), params.alpha / params.lambda_P)
    return _scalar_volume(mesh, S.Z, S.Q, S.Q.cells, volume_degree(k), "mass", w)


def assemble_a3(mesh: Mesh, params: ModelParameters, k: int = 0) -> sp.csr_matrix:
    """``(phi / lambda, psi)`` with the subdomain value of lambda."""
    Z = spaces(mesh, k).Z
    w = 1.0 / params.lambda_of(mesh.cell_tag)
    return _scalar_volume(mesh, Z, Z, np.arange(mesh.n_cells), volume_degree(k), "mass", w)


def assemble_tilde_a2(mesh: Mesh, params: ModelParameters, k: int = 0,
                      formulation: str = CG_PRESSURE) -> sp.csr_matrix:
    """``(c0 + alpha^2/lambda_P)(p, q)`` on the poroelastic cells."""
    Q = spaces(mesh, k, formulation).Q
    w = np.full(len(Q.cells), params.c0 + params.alpha ** 2 / params.lambda_P)
    return _scalar_volume(mesh, Q, Q, Q.cells, volume_degree(k), "mass", w)


def assemble_riesz_phi(mesh: Mesh, params: ModelParameters, k: int = 0) -> sp.csr_matrix:
    """``((1/lambda + 1/(2 mu)) phi, psi)``: total-pressure block of the preconditioner."""
    Z = spaces(mesh, k).Z
    w = 1.0 / params.lambda_of(mesh.cell_tag) + 0.5 / params.mu_of(mesh.cell_tag)
    return _scalar_volume(mesh, Z, Z, np.arange(mesh.n_cells), volume_degree(k), "mass", w)


def assemble_mass_phi(mesh: Mesh, k: int = 0) -> sp.csr_matrix:
    Z = spaces(mesh, k).Z
    return _scalar_volume(mesh, Z, Z, np.arange(mesh.n_cells), volume_degree(k), "mass",
                          np.ones(mesh.n_cells))


def total_pressure_integrals(mesh: Mesh, k: int = 0) -> np.ndarray:
    """``int_Omega psi_j`` for every total-pressure basis function."""
    Z = spaces(mesh, k).Z
    q = triangle_rule(volume_degree(k))
    B = eval_basis(Z.space, mesh, np.arange(mesh.n_cells), q.points, 0)
    W = q.weights[None, :] * (2.0 * mesh.areas)[:, None]
    out = np.zeros(Z.n_dofs)
    _vector_add(out, Z.cell_dofs, np.einsum("cqn,cq->cn", B.values, W))
    return out


# ----------------------------------------------------------------------
# right-hand side


@dataclass
class RhsData:
    """Load vectors and essential boundary values.

    ``u_fixed`` / ``p_fixed`` hold the constrained DoF indices and their
    prescribed values (``p_fixed`` is empty for discontinuous pressure).
    """

    F: np.ndarray
    G: np.ndarray
    u_fixed: tuple
    p_fixed: tuple
    parts: dict = field(default_factory=dict)


def _cell_tag_at(mesh, cells):
    return mesh.cell_tag[cells]


def assemble_rhs(mesh: Mesh, params: ModelParameters, k: int, formulation: str, case) -> RhsData:
    """Right-hand sides ``F`` and ``G`` for a case.

    ``case`` supplies ``body(X, tag)``, ``source(X)`` and, through
    ``case.exact``, the boundary data (Dirichlet values, tractions, fluxes)
    and the interface traction jump used for the manufactured correction.
    """
    S = spaces(mesh, k, formulation)
    V, Q = S.V, S.Q
    exact = getattr(case, "exact", None)
    if getattr(case, "interface_correction", False) and exact is None:
        raise MissingData("interface correction requires an exact solution")
    beta_u, beta_p = params.penalties(k)
    F = np.zeros(V.n_dofs)
    G = np.zeros(Q.n_dofs)
    parts = {}

    # body load and fluid source, G = -(l, q)
    qdeg = volume_degree(k) + 4
    for sl in _chunks(mesh.n_cells):
        cells = np.arange(mesh.n_cells)[sl]
        ref, X, W = cell_quadrature(mesh, cells, qdeg)
        tags = np.broadcast_to(mesh.cell_tag[cells][:, None], X.shape[:2])
        bvals = np.asarray(case.body(X, tags), dtype=float)
        Bv = eval_basis(V.space, mesh, cells, ref, 0, V.cell_signs[cells])
        _vector_add(F, V.cell_dofs[cells], np.einsum("cqni,cqi,cq->cn", Bv.values, bvals, W))
    for sl in _chunks(len(Q.cells)):
        qc = Q.cells[sl]
        ref, X, W = cell_quadrature(mesh, qc, qdeg)
        Bq = eval_basis(Q.space, mesh, qc, ref, 0, Q.cell_signs[sl])
        svals = np.asarray(case.source(X), dtype=float)
        _vector_add(G, Q.cell_dofs[sl], -params.dt * np.einsum("cqn,cq,cq->cn", Bq.values, svals, W))

    fdeg = facet_degree(k) + 4
    if exact is not None:
        # displacement Dirichlet facets: Nitsche lifts of the full Dirichlet vector
        fD = displacement_dirichlet_facets(mesh)
        if len(fD):
            t, Xf, Wf = facet_quadrature(mesh, fD, fdeg)
            B0, d0 = _vector_side(mesh, V, fD, 0, t)
            mu = params.mu_of(mesh.cell_tag[mesh.facet_cells[fD, 0]])
            n = mesh.facet_normals[fD]
            g = np.asarray(exact.u(Xf), dtype=float)
            epsn = np.einsum("fqnia,fa->fqni", _sym(B0.grads), n)
            h = penalty_lengths(mesh)[fD]
            loc = -2.0 * mu[:, None] * np.einsum("fqni,fqi,fq->fn", epsn, g, Wf)
            loc += (2.0 * beta_u * mu / h)[:, None] * np.einsum("fqni,fqi,fq->fn", B0.values, g, Wf)
            _vector_add(F, d0, loc)
        # displacement Neumann facets: exact traction
        fN = displacement_neumann_facets(mesh)
        if len(fN):
            t, Xf, Wf = facet_quadrature(mesh, fN, fdeg)
            B0, d0 = _vector_side(mesh, V, fN, 0, t, order=0)
            tag = np.broadcast_to(mesh.cell_tag[mesh.facet_cells[fN, 0]][:, None], Xf.shape[:2])
            tr = np.einsum("fqia,fa->fqi", exact.sigma(Xf, tag), mesh.facet_normals[fN])
            _vector_add(F, d0, np.einsum("fqni,fqi,fq->fn", B0.values, tr, Wf))
        # fluid flux through flux boundaries and the interface (outward from P)
        fF = pressure_flux_facets(mesh)
        if len(fF):
            t, Xf, Wf = facet_quadrature(mesh, fF, fdeg)
            B0, d0 = _scalar_side(mesh, Q, fF, 0, t, order=0)
            flux = params.kappa / params.eta * np.einsum("fqa,fa->fq", exact.grad_p(Xf),
                                                         mesh.facet_normals[fF])
            _vector_add(G, d0, -params.dt * np.einsum("fqn,fq,fq->fn", B0.values, flux, Wf))
        # pressure Dirichlet facets, SIP lifts for discontinuous pressure
        fP = pressure_dirichlet_facets(mesh)
        if formulation == DG_PRESSURE and len(fP):
            t, Xf, Wf = facet_quadrature(mesh, fP, fdeg)
            B0, d0 = _scalar_side(mesh, Q, fP, 0, t)
            kap = params.kappa / params.eta
            g = np.asarray(exact.p(Xf), dtype=float)
            h = penalty_lengths(mesh)[fP]
            dn = np.einsum("fqna,fa->fqn", B0.grads, mesh.facet_normals[fP])
            loc = kap * np.einsum("fqn,fq,fq->fn", dn, g, Wf)
            loc -= (beta_p * kap / h)[:, None] * np.einsum("fqn,fq,fq->fn", B0.values, g, Wf)
            _vector_add(G, d0, params.dt * loc)

    if getattr(case, "interface_correction", False):
        fS = mesh.facets_with_tag(FacetTag.SIGMA)
        corr = np.zeros(V.n_dofs)
        if len(fS):
            t, Xf, Wf = facet_quadrature(mesh, fS, fdeg)
            n = mesh.facet_normals[fS]
            sP = exact.sigma(Xf, np.full(Xf.shape[:2], CellTag.P))
            sE = exact.sigma(Xf, np.full(Xf.shape[:2], CellTag.E))
            jump = np.einsum("fqia,fa->fqi", sP - sE, n)
            for side in (0, 1):
                B, d = _vector_side(mesh, V, fS, side, t, order=0)
                _vector_add(corr, d, 0.5 * np.einsum("fqni,fqi,fq->fn", B.values, jump, Wf))
        F += corr
        parts["interface"] = corr

    # essential values
    if exact is not None:
        u_vals = interpolate(V.space, mesh, exact.u, V)[V.constrained]
    else:
        u_vals = np.zeros(len(V.constrained))
    u_fixed = (V.constrained, u_vals)
    if formulation == CG_PRESSURE:
        pd = cg_dofs_on_facets(Q, mesh, pressure_dirichlet_facets(mesh))
        if exact is not None and len(pd):
            p_vals = interpolate(Q.space, mesh, exact.p, Q)[pd]
        else:
            p_vals = np.zeros(len(pd))
        p_fixed = (pd, p_vals)
    else:
        p_fixed = (np.zeros(0, dtype=np.int64), np.zeros(0))
    return RhsData(F, G, u_fixed, p_fixed, parts)


def assemble_vector_mass(mesh: Mesh, params: ModelParameters, k: int = 0) -> sp.csr_matrix:
    """``(2 mu u, v)`` on the displacement space."""
    V = spaces(mesh, k).V
    b = MatrixBuilder((V.n_dofs, V.n_dofs))
    q = triangle_rule(volume_degree(k))
    for sl in _chunks(mesh.n_cells):
        c = np.arange(mesh.n_cells)[sl]
        B = eval_basis(V.space, mesh, c, q.points, 0, V.cell_signs[c])
        W = q.weights[None, :] * (2.0 * mesh.areas[c] * 2.0 * params.mu_of(mesh.cell_tag[c]))[:, None]
        b.add(V.cell_dofs[c], V.cell_dofs[c], np.einsum("cqni,cqmi,cq->cnm", B.values, B.values, W))
    return b.tocsr()
