from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdivbiot.elements import (BDM_HDIV, LAGRANGE_CG, LAGRANGE_DG, P_ONLY, REF_NORMALS, REF_VERTICES,
                               SpaceSpec, build_dofmap, eval_basis, evaluate, facet_ref_points,
                               interpolate)
from hdivbiot.exceptions import DegenerateCell
from hdivbiot.forms import assemble_b1, cell_quadrature, facet_quadrature, spaces
from hdivbiot.mesh import CellTag, FacetTag, Mesh, build_mesh
from hdivbiot.quadrature import interval_rule, triangle_rule

from conftest import SQUARE, two_cell_mesh, unvalidated


def reference_mesh():
    def bnd(mids, sub):
        return np.full(len(mids), FacetTag.GNEU_P)
    with unvalidated():
        return Mesh.from_cells(REF_VERTICES.copy(), np.array([[0, 1, 2]]), np.array([CellTag.P]), bnd)


# ----------------------------------------------------------------------
# quadrature

@pytest.mark.parametrize("degree", range(0, 15))
def test_triangle_rule_exactness(degree):
    q = triangle_rule(degree)
    assert np.isclose(q.weights.sum(), 0.5, rtol=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
            assert abs(got - exact) <= 1e-13 * max(exact, 1e-300) + 1e-16


@pytest.mark.parametrize("degree", range(0, 20))
def test_interval_rule_exactness(degree):
    q = interval_rule(degree)
    for a in range(degree + 1):
        got = np.sum(q.weights * q.points[:, 0] ** a)
        assert abs(got - 1.0 / (a + 1)) <= 1e-14


# ----------------------------------------------------------------------
# reference element

@pytest.mark.parametrize("r", [1, 2, 3])
def test_bdm_facet_duality(r):
    """Normal moments of each edge basis function vanish on the other edges."""
    mesh = reference_mesh()
    space = SpaceSpec(BDM_HDIV, r)
    q = interval_rule(2 * r + 4)
    t = q.points[:, 0]
    ne = r + 1
    lengths = np.array([np.sqrt(2.0), 1.0, 1.0])
    for j in range(3):
        a, b = REF_VERTICES[(j + 1) % 3], REF_VERTICES[(j + 2) % 3]
        pts = a + np.outer(t, b - a)
        B = eval_basis(space, mesh, [0], pts, 0)
        vn = B.values[0] @ REF_NORMALS[j]
        for i in range(space.local_dim):
            if j * ne <= i < (j + 1) * ne:
                continue
            assert np.abs(vn[:, i]).max() < 1e-12, (j, i)
        # own facet: normal trace moments form an invertible block
        from scipy.special import eval_legendre
        M = np.array([[np.sum(q.weights * vn[:, j * ne + s] * eval_legendre(m, 2 * t - 1)) * lengths[j]
                       for s in range(ne)] for m in range(ne)])
        assert abs(np.linalg.det(M)) > 1e-8


def test_constant_field_reproduced(square4):
    rng = np.random.default_rng(0)
    for k in (0, 1, 2):
        V = spaces(square4, k).V
        c = interpolate(V.space, square4, lambda X: np.stack([np.ones(X.shape[:-1]), np.zeros(X.shape[:-1])], -1), V)
        pts = rng.dirichlet([1, 1, 1], size=7)[:, :2]
        vals = evaluate(V.space, square4, V, c, np.arange(square4.n_cells), pts).values
        assert np.abs(vals[..., 0] - 1).max() < 1e-13
        assert np.abs(vals[..., 1]).max() < 1e-13


@pytest.mark.parametrize("k", [0, 1, 2])
def test_divergence_is_polynomial_of_degree_k(k):
    mesh = build_mesh(SQUARE, 2)
    xy = mesh.vertices.copy()
    mesh = Mesh.from_cells(xy + 0.03 * np.sin(7 * xy[:, ::-1]) * (np.abs(xy - 0.5) < 0.49).all(1)[:, None],
                           mesh.cells, mesh.cell_tag, mesh.boundary_tag_map())
    V = spaces(mesh, k).V
    npts = (k + 3) * (k + 4) // 2
    pts = np.random.default_rng(1).dirichlet([1, 1, 1], size=npts)[:, :2]
    B = eval_basis(V.space, mesh, np.arange(mesh.n_cells), pts, 1, V.cell_signs)
    X = mesh.vertices[mesh.cells[:, 0]][:, None, :] + np.einsum("cij,qj->cqi", mesh.jacobians, pts)
    for c in range(mesh.n_cells):
        x, y = X[c, :, 0], X[c, :, 1]
        A = np.column_stack([x ** a * y ** b for a in range(k + 1) for b in range(k + 1 - a)])
        coef, *_ = np.linalg.lstsq(A, B.div[c], rcond=None)
        res = A @ coef - B.div[c]
        assert np.abs(res).max() < 1e-12 * max(1.0, np.abs(B.div[c]).max())


def test_degenerate_cell():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1e-17], [0.0, 1.0]])
    mesh = Mesh.__new__(Mesh)
    good = two_cell_mesh()
    object.__setattr__(mesh, "__dict__", dict(good.__dict__, vertices=v, cells=np.array([[0, 1, 2], [0, 2, 3]]),
                                              _cache={}))
    with pytest.raises(DegenerateCell):
        eval_basis(SpaceSpec(BDM_HDIV, 1), mesh, [0], REF_VERTICES, 0)


# ----------------------------------------------------------------------
# DoF maps

def test_dg0_count(square2):
    assert build_dofmap(SpaceSpec(LAGRANGE_DG, 0), square2).n_dofs == 8


def test_bdm1_two_cells():
    m = two_cell_mesh()
    dm = build_dofmap(SpaceSpec(BDM_HDIV, 1), m)
    assert dm.cell_dofs.size == 12
    assert dm.n_dofs == 10
    shared = np.intersect1d(dm.cell_dofs[0], dm.cell_dofs[1])
    assert len(shared) == 2


def test_cg1_on_poroelastic_half(square2):
    dm = build_dofmap(SpaceSpec(LAGRANGE_CG, 1, P_ONLY), square2)
    pverts = np.unique(square2.cells[square2.cell_tag == CellTag.P])
    assert dm.n_dofs == len(pverts) == 6


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("n", [2, 4])
def test_closed_form_counts(k, n):
    m = build_mesh(SQUARE, n)
    nf, nc = m.n_facets, m.n_cells
    S = spaces(m, k)
    assert S.V.n_dofs == nf * (k + 2) + nc * ((k + 2) * (k + 3) - 3 * (k + 2))
    assert S.Z.n_dofs == nc * (k + 1) * (k + 2) // 2
    pc = m.cell_tag == CellTag.P
    pv = len(np.unique(m.cells[pc]))
    pf = len(np.unique(m.cell_facets[pc]))
    r = k + 1
    assert S.Q.n_dofs == pv + pf * (r - 1) + pc.sum() * (r - 1) * (r - 2) // 2
    dg = spaces(m, k, "DG_PRESSURE").Q
    assert dg.n_dofs == pc.sum() * (r + 1) * (r + 2) // 2
    assert len(np.unique(dg.cell_dofs)) == dg.cell_dofs.size


def test_dirichlet_constraints(square4):
    V = spaces(square4, 1).V
    b = np.flatnonzero(square4.facet_cells[:, 1] < 0)
    assert np.array_equal(np.sort(V.constrained), np.sort(V.facet_dofs[b].ravel()))


# ----------------------------------------------------------------------
# interpolation

def test_linear_field_divergence(square4):
    V = spaces(square4, 0).V
    c = interpolate(V.space, square4, lambda X: X.copy(), V)
    d = evaluate(V.space, square4, V, c, np.arange(square4.n_cells), triangle_rule(2).points, 1).div
    assert np.abs(d - 2.0).max() < 1e-13


def test_cg1_nodal_interpolation(square4):
    Q = spaces(square4, 0).Q
    c = interpolate(Q.space, square4, lambda X: X[..., 0] + X[..., 1], Q)
    vals = evaluate(Q.space, square4, Q, c, Q.cells, REF_VERTICES).values
    X = square4.vertices[square4.cells[Q.cells]]
    assert np.abs(vals - X.sum(-1)).max() < 1e-14


@pytest.mark.parametrize("k", [0, 1, 2])
def test_fortin_commuting(k):
    mesh = build_mesh(SQUARE, 4)
    S = spaces(mesh, k)
    v = lambda X: np.stack([np.sin(np.pi * X[..., 0]), np.zeros(X.shape[:-1])], -1)  # noqa: E731
    c = interpolate(S.V.space, mesh, v, S.V)
    B = assemble_b1(mesh, None, k)
    # oracle: -(psi, div v) with the analytic divergence and a high-order rule
    ref, X, W = cell_quadrature(mesh, np.arange(mesh.n_cells), 24)
    psi = eval_basis(S.Z.space, mesh, np.arange(mesh.n_cells), ref, 0).values
    divv = np.pi * np.cos(np.pi * X[..., 0])
    exact = np.zeros(S.Z.n_dofs)
    np.add.at(exact, S.Z.cell_dofs, -np.einsum("cqn,cq,cq->cn", psi, divv, W))
    assert np.abs(B @ c - exact).max() < 1e-11


# ----------------------------------------------------------------------
# properties

@given(st.integers(0, 2), st.integers(0, 2 ** 31 - 1))
def test_equilibrium_property(k, seed):
    mesh = build_mesh(SQUARE, 2)
    S = spaces(mesh, k)
    u = np.random.default_rng(seed).standard_normal(S.V.n_dofs)
    ref, X, W = cell_quadrature(mesh, np.arange(mesh.n_cells), 2 * k + 4)
    div = evaluate(S.V.space, mesh, S.V, u, np.arange(mesh.n_cells), ref, 1).div
    psi = eval_basis(S.Z.space, mesh, np.arange(mesh.n_cells), ref, 0).values
    M = np.einsum("cqn,cqm,cq->cnm", psi, psi, W)
    rhs = np.einsum("cqn,cq,cq->cn", psi, div, W)
    proj = np.einsum("cqn,cn->cq", psi, np.linalg.solve(M, rhs[..., None])[..., 0])
    assert np.abs(proj - div).max() <= 1e-12 * np.abs(div).max()


@given(st.integers(0, 2), st.integers(0, 2 ** 31 - 1))
def test_normal_trace_continuity(k, seed):
    mesh = build_mesh(SQUARE, 4)
    S = spaces(mesh, k)
    u = np.random.default_rng(seed).standard_normal(S.V.n_dofs)
    f = np.flatnonzero(mesh.facet_cells[:, 1] >= 0)
    t, X, W = facet_quadrature(mesh, f, 2 * k + 5)
    n = mesh.facet_normals[f]
    u0 = evaluate(S.V.space, mesh, S.V, u, mesh.facet_cells[f, 0], facet_ref_points(mesh, f, 0, t)).values
    u1 = evaluate(S.V.space, mesh, S.V, u, mesh.facet_cells[f, 1], facet_ref_points(mesh, f, 1, t)).values
    jump = np.einsum("fqi,fi->fq", u0 - u1, n)
    assert np.abs(jump).max() < 1e-12 * max(1.0, np.abs(u).max())
