"""Reference elements, Piola maps and degree-of-freedom maps.

Three families are supported on triangles:

* ``BDM_HDIV``: Brezzi-Douglas-Marini ``[P_r]^2`` with normal-moment facet
  DoFs and gradient/curl-bubble interior moments, mapped by the
  contravariant Piola transform;
* ``LAGRANGE_CG`` / ``LAGRANGE_DG``: nodal ``P_r`` on the equispaced lattice.

Reference basis functions are stored as monomial coefficient matrices
obtained by inverting the DoF matrix, so every degree goes through the same
construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import eval_legendre

from .exceptions import DegenerateCell
from .mesh import CellTag, FacetTag, Mesh
from .quadrature import interval_rule, triangle_rule

BDM_HDIV = "BDM_HDIV"
LAGRANGE_CG = "LAGRANGE_CG"
LAGRANGE_DG = "LAGRANGE_DG"
WHOLE = "WHOLE"
P_ONLY = "P_ONLY"

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# local edge j joins local vertices (j+1)%3 -> (j+2)%3
REF_NORMALS = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
REF_NORMALS[0] /= np.sqrt(2.0)


@dataclass(frozen=True)
class SpaceSpec:
    family: str
    degree: int
    domain: str = WHOLE

    def __post_init__(self):
        if self.family not in (BDM_HDIV, LAGRANGE_CG, LAGRANGE_DG):
            raise ValueError(f"unknown family {self.family!r}")
        if self.domain not in (WHOLE, P_ONLY):
            raise ValueError(f"unknown domain restriction {self.domain!r}")
        if self.degree < 0 or (self.family != LAGRANGE_DG and self.degree < 1):
            raise ValueError(f"degree {self.degree} not allowed for {self.family}")

    @property
    def vector(self) -> bool:
        return self.family == BDM_HDIV

    @property
    def local_dim(self) -> int:
        r = self.degree
        if self.family == BDM_HDIV:
            return (r + 1) * (r + 2)
        return (r + 1) * (r + 2) // 2


# ----------------------------------------------------------------------
# monomials


_CENTRE = 1.0 / 3.0
_SCALE = 3.0


@lru_cache
def monomial_exponents(r: int) -> np.ndarray:
    return np.array([(i - j, j) for i in range(r + 1) for j in range(i + 1)], dtype=int)


def _powers(x, p):
    """x**p with 0**negative treated as zero (for derivative factors)."""
    out = np.zeros(np.broadcast(x, p).shape)
    ok = np.broadcast_to(p >= 0, out.shape)
    out[ok] = np.broadcast_to(x, out.shape)[ok] ** np.broadcast_to(p, out.shape)[ok]
    return out


def monomials(r: int, pts: np.ndarray, order: int = 0):
    """Shifted monomials of total degree <= r and their derivatives at ``pts`` (..., 2).

    Returns ``(val, grad, hess)`` up to ``order`` with shapes ``(..., nm)``,
    ``(..., nm, 2)`` and ``(..., nm, 2, 2)``.
    """
    e = monomial_exponents(r)
    a, b = e[:, 0], e[:, 1]
    # centred and scaled variables keep the DoF matrices well conditioned
    x = _SCALE * (pts[..., 0, None] - _CENTRE)
    y = _SCALE * (pts[..., 1, None] - _CENTRE)
    val = _powers(x, a) * _powers(y, b)
    out = [val]
    if order >= 1:
        gx = a * _powers(x, a - 1) * _powers(y, b)
        gy = b * _powers(x, a) * _powers(y, b - 1)
        out.append(_SCALE * np.stack([gx, gy], axis=-1))
    if order >= 2:
        hxx = a * (a - 1) * _powers(x, a - 2) * _powers(y, b)
        hxy = a * b * _powers(x, a - 1) * _powers(y, b - 1)
        hyy = b * (b - 1) * _powers(x, a) * _powers(y, b - 2)
        out.append(_SCALE ** 2 * np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2))
    return tuple(out)


def _edge_points(j, t):
    a = REF_VERTICES[(j + 1) % 3]
    b = REF_VERTICES[(j + 2) % 3]
    return a + np.outer(t, b - a), np.linalg.norm(b - a)


def _legendre01(j, t):
    return eval_legendre(j, 2.0 * t - 1.0)


# ----------------------------------------------------------------------
# reference elements


@dataclass(frozen=True)
class ReferenceElement:
    """Reference basis as monomial coefficients.

    For vector elements ``coeffs`` has shape ``(2, nm, ndof)``: component,
    monomial, basis function; scalar elements use ``(nm, ndof)``.
    """

    spec_family: str
    degree: int
    coeffs: np.ndarray
    n_edge_dofs: int
    n_vertex_dofs: int
    n_interior_dofs: int
    nodes: np.ndarray | None = None


@lru_cache
def bdm_reference(r: int) -> ReferenceElement:
    nm = len(monomial_exponents(r))
    ndof = 2 * nm
    rows = []
    # facet normal moments against Legendre polynomials in the local parameter
    qe = interval_rule(2 * r + 2)
    t = qe.points[:, 0]
    for j in range(3):
        pts, length = _edge_points(j, t)
        (m,) = monomials(r, pts)
        n = REF_NORMALS[j]
        for i in range(r + 1):
            w = qe.weights * length * _legendre01(i, t)
            rows.append(np.concatenate([n[0] * (w @ m), n[1] * (w @ m)]))
    # interior moments: gradients of P_{r-1} (no constant) and curls of bubble * P_{r-2}
    qt = triangle_rule(2 * r + 4)
    m, = monomials(r, qt.points)
    wm = qt.weights[:, None] * m
    if r >= 2:
        _, g = monomials(r - 1, qt.points, 1)
        for s in range(1, g.shape[1]):
            rows.append(np.concatenate([g[:, s, 0] @ wm, g[:, s, 1] @ wm]))
        x, y = qt.points[:, 0], qt.points[:, 1]
        bub = x * y * (1 - x - y)
        bx = y * (1 - x - y) - x * y
        by = x * (1 - x - y) - x * y
        qv, qg = monomials(r - 2, qt.points, 1)
        for s in range(qv.shape[1]):
            # curl(w) = (dw/dy, -dw/dx)
            dwx = bx * qv[:, s] + bub * qg[:, s, 0]
            dwy = by * qv[:, s] + bub * qg[:, s, 1]
            rows.append(np.concatenate([dwy @ wm, -dwx @ wm]))
    D = np.array(rows)
    assert D.shape == (ndof, ndof)
    C = np.linalg.inv(D).reshape(2, nm, ndof)
    return ReferenceElement(BDM_HDIV, r, C, r + 1, 0, (r + 1) * (r - 1))


def lagrange_nodes(r: int) -> np.ndarray:
    """Lattice nodes: vertices, edge-interior nodes per local edge, interior nodes."""
    if r == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]])
    nodes = [REF_VERTICES[i] for i in range(3)]
    for j in range(3):
        a = REF_VERTICES[(j + 1) % 3]
        b = REF_VERTICES[(j + 2) % 3]
        nodes += [a + (b - a) * s / r for s in range(1, r)]
    for j in range(1, r):
        for i in range(1, r - j):
            nodes.append(np.array([i / r, j / r]))
    return np.array(nodes)


@lru_cache
def lagrange_reference(r: int) -> ReferenceElement:
    nodes = lagrange_nodes(r)
    (V,) = monomials(r, nodes)
    C = np.linalg.inv(V)
    if r == 0:
        return ReferenceElement(LAGRANGE_DG, 0, C, 0, 0, 1, nodes)
    return ReferenceElement(LAGRANGE_CG, r, C, r - 1, 1, (r - 1) * (r - 2) // 2, nodes)


def reference_element(space: SpaceSpec) -> ReferenceElement:
    if space.family == BDM_HDIV:
        return bdm_reference(space.degree)
    return lagrange_reference(space.degree)


# ----------------------------------------------------------------------
# DoF maps

ENTITY_VERTEX, ENTITY_FACET, ENTITY_CELL = 0, 1, 2


@dataclass(frozen=True, eq=False)
class DofMap:
    """Local-to-global DoF numbering of one space on one mesh.

    Attributes
    ----------
    space : SpaceSpec
    n_dofs : int
    cells : (m,) mesh cells covered by the space
    cell_row : (nc,) row of each mesh cell in ``cell_dofs`` (-1 if not covered)
    cell_dofs : (m, nloc) global indices
    cell_signs : (m, nloc) +-1 factors turning reference into global basis functions
    entity_kind, entity_index : (n_dofs,) owning entity of each DoF
    facet_dofs : (nf, r+1) BDM facet DoFs in global orientation, or None
    constrained : sorted DoFs fixed by essential boundary conditions
    """

    space: SpaceSpec
    n_dofs: int
    cells: np.ndarray
    cell_row: np.ndarray
    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    entity_kind: np.ndarray
    entity_index: np.ndarray
    facet_dofs: np.ndarray | None
    constrained: np.ndarray


def _edge_forward(mesh: Mesh, cells: np.ndarray):
    """(m, 3) True where the local edge parameter runs from lower to higher global vertex."""
    c = mesh.cells[cells]
    a = c[:, [1, 2, 0]]
    b = c[:, [2, 0, 1]]
    return a < b


def _outward_agrees(mesh: Mesh, cells: np.ndarray):
    """(m, 3) True where the cell's outward normal equals the global facet normal."""
    f = mesh.cell_facets[cells]
    return mesh.facet_cells[f, 0] == cells[:, None]


def build_dofmap(space: SpaceSpec, mesh: Mesh) -> DofMap:
    if space.domain == P_ONLY:
        cells = mesh.cells_with_tag(CellTag.P)
    else:
        cells = np.arange(mesh.n_cells)
    m = len(cells)
    cell_row = -np.ones(mesh.n_cells, dtype=np.int64)
    cell_row[cells] = np.arange(m)
    ref = reference_element(space)
    nloc = space.local_dim
    r = space.degree

    if space.family == BDM_HDIV:
        ne = r + 1
        nf = mesh.n_facets
        fd = np.arange(nf * ne).reshape(nf, ne)
        nint = ref.n_interior_dofs
        interior = nf * ne + np.arange(m * nint).reshape(m, nint)
        cf = mesh.cell_facets[cells]
        dofs = np.concatenate([fd[cf].reshape(m, 3 * ne), interior], axis=1)
        sn = np.where(_outward_agrees(mesh, cells), 1.0, -1.0)
        sp = np.where(_edge_forward(mesh, cells), 1.0, -1.0)
        signs = np.ones((m, nloc))
        for i in range(ne):
            signs[:, i:3 * ne:ne] = sn * sp ** i
        kind = np.concatenate([np.full(nf * ne, ENTITY_FACET), np.full(m * nint, ENTITY_CELL)])
        index = np.concatenate([np.repeat(np.arange(nf), ne), np.repeat(cells, nint)])
        dir_f = mesh.facets_with_tag(FacetTag.GDIR_E, FacetTag.GDIR_P)
        constrained = np.sort(fd[dir_f].ravel())
        return DofMap(space, nf * ne + m * nint, cells, cell_row, dofs, signs, kind, index, fd, constrained)

    if space.family == LAGRANGE_DG or r == 0:
        dofs = np.arange(m * nloc).reshape(m, nloc)
        kind = np.full(m * nloc, ENTITY_CELL)
        index = np.repeat(cells, nloc)
        return DofMap(space, m * nloc, cells, cell_row, dofs, np.ones((m, nloc)), kind, index, None,
                      np.zeros(0, dtype=np.int64))

    # continuous Lagrange
    vused = np.unique(mesh.cells[cells])
    vnum = -np.ones(mesh.n_vertices, dtype=np.int64)
    vnum[vused] = np.arange(len(vused))
    nvd = len(vused)
    cf = mesh.cell_facets[cells]
    fused = np.unique(cf)
    fnum = -np.ones(mesh.n_facets, dtype=np.int64)
    fnum[fused] = np.arange(len(fused))
    ne = r - 1
    nint = ref.n_interior_dofs
    edge_base = nvd
    int_base = nvd + len(fused) * ne
    parts = [vnum[mesh.cells[cells]]]
    fwd = _edge_forward(mesh, cells)
    for j in range(3):
        base = edge_base + fnum[cf[:, j]][:, None] * ne
        s = np.arange(ne)
        idx = np.where(fwd[:, j, None], s, ne - 1 - s)
        parts.append(base + idx)
    parts.append(int_base + np.arange(m * nint).reshape(m, nint))
    dofs = np.concatenate(parts, axis=1)
    n = int_base + m * nint
    kind = np.concatenate([np.full(nvd, ENTITY_VERTEX), np.full(len(fused) * ne, ENTITY_FACET),
                           np.full(m * nint, ENTITY_CELL)])
    index = np.concatenate([vused, np.repeat(fused, ne), np.repeat(cells, nint)])
    return DofMap(space, n, cells, cell_row, dofs, np.ones((m, nloc)), kind, index, None,
                  np.zeros(0, dtype=np.int64))


def cg_dofs_on_facets(dofmap: DofMap, mesh: Mesh, facets: np.ndarray) -> np.ndarray:
    """Global CG DoFs lying on the closure of the given facets."""
    if len(facets) == 0:
        return np.zeros(0, dtype=np.int64)
    ref = reference_element(dofmap.space)
    r = dofmap.space.degree
    out = []
    for side in (0, 1):
        c = mesh.facet_cells[facets, side]
        ok = (c >= 0) & (dofmap.cell_row[np.maximum(c, 0)] >= 0)
        if not ok.any():
            continue
        rows = dofmap.cell_row[c[ok]]
        j = mesh.facet_local[facets[ok], side]
        local = np.stack([(j + 1) % 3, (j + 2) % 3], axis=1)
        out.append(np.take_along_axis(dofmap.cell_dofs[rows], local, axis=1).ravel())
        for s in range(r - 1):
            out.append(dofmap.cell_dofs[rows, 3 + j * (r - 1) + s])
    del ref
    return np.unique(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)


# ----------------------------------------------------------------------
# basis evaluation


@dataclass
class Basis:
    """Physical basis functions at quadrature points of a batch of cells.

    Shapes (``m`` cells, ``nq`` points, ``n`` local functions):
    scalar: ``values (m, nq, n)``, ``grads (m, nq, n, 2)``, ``hess (m, nq, n, 2, 2)``;
    vector: ``values (m, nq, n, 2)``, ``grads (m, nq, n, 2, 2)`` with
    ``grads[..., i, a] = d v_i / d x_a``, ``div (m, nq, n)``, ``hess (m, nq, n, 2, 2, 2)``.
    """

    values: np.ndarray
    grads: np.ndarray | None = None
    div: np.ndarray | None = None
    hess: np.ndarray | None = None


def cell_geometry(mesh: Mesh, cells: np.ndarray):
    """Jacobians, determinants and inverse Jacobians; raises on degenerate cells."""
    J = mesh.jacobians[cells]
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    scale = mesh.cell_diameters[cells] ** 2
    if np.any(np.abs(det) <= 1e-14 * scale):
        raise DegenerateCell("cell with vanishing Jacobian determinant")
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / det
    Jinv[:, 1, 1] = J[:, 0, 0] / det
    Jinv[:, 0, 1] = -J[:, 0, 1] / det
    Jinv[:, 1, 0] = -J[:, 1, 0] / det
    return J, det, Jinv


def map_points(mesh: Mesh, cells: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
    """Physical coordinates (m, nq, 2) of reference points (nq, 2) or (m, nq, 2)."""
    J = mesh.jacobians[cells]
    x0 = mesh.vertices[mesh.cells[cells, 0]]
    if ref_points.ndim == 2:
        return x0[:, None, :] + np.einsum("cij,qj->cqi", J, ref_points)
    return x0[:, None, :] + np.einsum("cij,cqj->cqi", J, ref_points)


def eval_basis(space: SpaceSpec, mesh: Mesh, cells, ref_points, order: int = 1,
               signs: np.ndarray | None = None) -> Basis:
    """Evaluate mapped basis functions on ``cells`` at reference points.

    ``ref_points`` is ``(nq, 2)`` shared by all cells or ``(m, nq, 2)``.
    ``signs`` (``(m, nloc)``, usually ``dofmap.cell_signs``) turns local into
    global basis functions.  ``order`` selects derivatives (0, 1 or 2).
    """
    cells = np.atleast_1d(np.asarray(cells, dtype=np.int64))
    ref = reference_element(space)
    J, det, Jinv = cell_geometry(mesh, cells)
    mon = monomials(space.degree, np.asarray(ref_points, dtype=float), order)
    shared = np.asarray(ref_points).ndim == 2
    pre = "q" if shared else "cq"
    if space.family == BDM_HDIV:
        C = ref.coeffs
        vhat = np.einsum(f"{pre}m,imn->{pre}ni", mon[0], C)
        if shared:
            vhat = np.broadcast_to(vhat, (len(cells),) + vhat.shape)
        values = np.einsum("cij,cqnj->cqni", J, vhat) / det[:, None, None, None]
        out = Basis(values)
        if order >= 1:
            ghat = np.einsum(f"{pre}ma,imn->{pre}nia", mon[1], C)
            if shared:
                ghat = np.broadcast_to(ghat, (len(cells),) + ghat.shape)
            grads = np.einsum("cij,cqnjb,cba->cqnia", J, ghat, Jinv) / det[:, None, None, None, None]
            out.grads = grads
            out.div = (ghat[..., 0, 0] + ghat[..., 1, 1]) / det[:, None, None]
        if order >= 2:
            hhat = np.einsum(f"{pre}mab,imn->{pre}niab", mon[2], C)
            if shared:
                hhat = np.broadcast_to(hhat, (len(cells),) + hhat.shape)
            out.hess = np.einsum("cij,cqnjef,cea,cfb->cqniab", J, hhat, Jinv, Jinv) \
                / det[:, None, None, None, None, None]
        if signs is not None:
            s = signs[:, None, :]
            out.values = out.values * s[..., None]
            if out.grads is not None:
                out.grads = out.grads * s[..., None, None]
                out.div = out.div * s
            if out.hess is not None:
                out.hess = out.hess * s[..., None, None, None]
        return out
    C = ref.coeffs
    values = np.einsum(f"{pre}m,mn->{pre}n", mon[0], C)
    if shared:
        values = np.broadcast_to(values, (len(cells),) + values.shape)
    out = Basis(np.ascontiguousarray(values))
    if order >= 1:
        ghat = np.einsum(f"{pre}ma,mn->{pre}na", mon[1], C)
        if shared:
            ghat = np.broadcast_to(ghat, (len(cells),) + ghat.shape)
        out.grads = np.einsum("cqnb,cba->cqna", ghat, Jinv)
    if order >= 2:
        hhat = np.einsum(f"{pre}mab,mn->{pre}nab", mon[2], C)
        if shared:
            hhat = np.broadcast_to(hhat, (len(cells),) + hhat.shape)
        out.hess = np.einsum("cqnef,cea,cfb->cqnab", hhat, Jinv, Jinv)
    return out


def facet_ref_points(mesh: Mesh, facets: np.ndarray, side: int, t: np.ndarray) -> np.ndarray:
    """Reference coordinates (m, nq, 2) in ``facet_cells[:, side]`` of facet points.

    ``t`` parametrises each facet from its lower to its higher vertex.
    """
    cells = mesh.facet_cells[facets, side]
    j = mesh.facet_local[facets, side]
    forward = mesh.cells[cells, (j + 1) % 3] == mesh.facets[facets, 0]
    tt = np.where(forward[:, None], t[None, :], 1.0 - t[None, :])
    a = REF_VERTICES[(j + 1) % 3]
    b = REF_VERTICES[(j + 2) % 3]
    return a[:, None, :] + tt[:, :, None] * (b - a)[:, None, :]


def facet_points(mesh: Mesh, facets: np.ndarray, t: np.ndarray) -> np.ndarray:
    a = mesh.vertices[mesh.facets[facets, 0]]
    b = mesh.vertices[mesh.facets[facets, 1]]
    return a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]


# ----------------------------------------------------------------------
# interpolation


def interpolate(space: SpaceSpec, mesh: Mesh, field, dofmap: DofMap | None = None) -> np.ndarray:
    """Canonical interpolant of an analytic field.

    ``field`` maps points ``(..., 2)`` to values ``(...)`` or ``(..., 2)``.
    BDM uses facet normal moments and interior moments of the Piola
    pull-back; Lagrange spaces use nodal values.
    """
    dm = dofmap if dofmap is not None else build_dofmap(space, mesh)
    cells = dm.cells
    r = space.degree
    out = np.zeros(dm.n_dofs)
    if space.family != BDM_HDIV:
        ref = reference_element(space)
        x = map_points(mesh, cells, ref.nodes)
        out[dm.cell_dofs] = np.asarray(field(x), dtype=float)
        return out
    J, det, Jinv = cell_geometry(mesh, cells)
    m = len(cells)
    ne = r + 1
    local = np.zeros((m, space.local_dim))
    qe = interval_rule(2 * r + 8)
    t = qe.points[:, 0]
    X = mesh.vertices[mesh.cells[cells]]
    for j in range(3):
        a = X[:, (j + 1) % 3]
        b = X[:, (j + 2) % 3]
        pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        tang = b - a
        # outward normal times length (counter-clockwise cells)
        nl = np.column_stack([tang[:, 1], -tang[:, 0]])
        vn = np.einsum("cqi,ci->cq", np.asarray(field(pts), dtype=float), nl)
        for i in range(ne):
            local[:, j * ne + i] = vn @ (qe.weights * _legendre01(i, t))
    if r >= 2:
        qt = triangle_rule(2 * r + 8)
        x = map_points(mesh, cells, qt.points)
        v = np.asarray(field(x), dtype=float)
        vhat = np.einsum("cij,cqj->cqi", Jinv, v) * det[:, None, None]
        _, g = monomials(r - 1, qt.points, 1)
        k = 3 * ne
        for s in range(1, g.shape[1]):
            local[:, k] = np.einsum("cqi,qi,q->c", vhat, g[:, s], qt.weights)
            k += 1
        xr, yr = qt.points[:, 0], qt.points[:, 1]
        bub = xr * yr * (1 - xr - yr)
        bx = yr * (1 - xr - yr) - xr * yr
        by = xr * (1 - xr - yr) - xr * yr
        qv, qg = monomials(r - 2, qt.points, 1)
        for s in range(qv.shape[1]):
            dwx = bx * qv[:, s] + bub * qg[:, s, 0]
            dwy = by * qv[:, s] + bub * qg[:, s, 1]
            local[:, k] = np.einsum("cq,q->c", vhat[..., 0] * dwy - vhat[..., 1] * dwx, qt.weights)
            k += 1
    out[dm.cell_dofs] = local * dm.cell_signs
    return out


def evaluate(space: SpaceSpec, mesh: Mesh, dofmap: DofMap, coeffs: np.ndarray, cells, ref_points,
             order: int = 0) -> Basis:
    """Finite element function and derivatives at reference points of ``cells``."""
    cells = np.atleast_1d(np.asarray(cells, dtype=np.int64))
    rows = dofmap.cell_row[cells]
    B = eval_basis(space, mesh, cells, ref_points, order, dofmap.cell_signs[rows])
    c = coeffs[dofmap.cell_dofs[rows]]
    if space.vector:
        out = Basis(np.einsum("cqni,cn->cqi", B.values, c))
        if order >= 1:
            out.grads = np.einsum("cqnia,cn->cqia", B.grads, c)
            out.div = np.einsum("cqn,cn->cq", B.div, c)
        if order >= 2:
            out.hess = np.einsum("cqniab,cn->cqiab", B.hess, c)
        return out
    out = Basis(np.einsum("cqn,cn->cq", B.values, c))
    if order >= 1:
        out.grads = np.einsum("cqna,cn->cqa", B.grads, c)
    if order >= 2:
        out.hess = np.einsum("cqnab,cn->cqab", B.hess, c)
    return out
