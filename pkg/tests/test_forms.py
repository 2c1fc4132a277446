from dataclasses import replace

import numpy as np
import pytest
import sympy as sy
from hypothesis import given, strategies as st

from hdivbiot.cases import SQUARE_PARAMS, Case, square_case
from hdivbiot.elements import eval_basis, interpolate
from hdivbiot.exceptions import MissingData
from hdivbiot.forms import (CG_PRESSURE, DG_PRESSURE, ModelParameters, assemble_a1h, assemble_a2_cg,
                            assemble_a2h_dg, assemble_a3, assemble_ahat1, assemble_b1, assemble_b2,
                            assemble_rhs, assemble_riesz_phi, assemble_tilde_a2, cell_quadrature,
                            penalty_lengths, spaces)
from hdivbiot.mesh import CellTag, FacetTag, Mesh, build_mesh

from conftest import SQUARE, free_boundary_square
from oracles import sip_elasticity_dense

P = SQUARE_PARAMS.with_penalties(0)


def dense(A):
    return A.toarray()


def free_dofs(mesh, k):
    V = spaces(mesh, k).V
    return np.setdiff1d(np.arange(V.n_dofs), V.constrained)


def vec(f):
    return lambda X: np.stack(f(X[..., 0], X[..., 1]), -1)


# ----------------------------------------------------------------------
# displacement forms

@pytest.mark.parametrize("k", [0, 1])
def test_a1h_matches_facetwise_oracle(k, square2):
    params = SQUARE_PARAMS.with_penalties(k)
    V = spaces(square2, k).V
    ref = sip_elasticity_dense(square2, V, params, params.beta_u, hpen=penalty_lengths(square2))
    got = dense(assemble_a1h(square2, params, k))
    assert np.abs(got - ref).max() < 1e-10 * np.abs(ref).max()
    ref_hat = sip_elasticity_dense(square2, V, params, params.beta_u, consistency=False,
                                   hpen=penalty_lengths(square2))
    assert np.abs(dense(assemble_ahat1(square2, params, k)) - ref_hat).max() < 1e-10 * np.abs(ref).max()


@pytest.mark.parametrize("field", [lambda x, y: (np.ones_like(x), 2 * np.ones_like(x)),
                                   lambda x, y: (-y, x)])
def test_rigid_motions_in_kernel(field):
    mesh = free_boundary_square(4)
    V = spaces(mesh, 0).V
    u = interpolate(V.space, mesh, vec(field), V)
    A = assemble_a1h(mesh, P, 0)
    assert np.abs(A @ u).max() < 1e-11 * np.abs(A).max() * np.abs(u).max()
    assert abs(u @ assemble_ahat1(mesh, P, 0) @ u) < 1e-11 * abs(A).max()


def test_a1h_energy_of_smooth_field():
    """Continuous field in BDM2: a1h(u, u) is the volume energy only."""
    mesh = free_boundary_square(4)
    V = spaces(mesh, 1).V
    u = interpolate(V.space, mesh, vec(lambda x, y: (x ** 2, x * y)), V)
    params = SQUARE_PARAMS.with_penalties(1)
    x, y = sy.symbols("x y")
    e2 = (2 * x) ** 2 + 2 * (y / 2) ** 2 + x ** 2
    exact = float(2 * 20 * sy.integrate(e2, (x, 0, 1), (y, sy.Rational(1, 2), 1))
                  + 2 * 10 * sy.integrate(e2, (x, 0, 1), (y, 0, sy.Rational(1, 2))))
    assert abs(u @ assemble_a1h(mesh, params, 1) @ u - exact) < 1e-10 * exact


def test_equal_mu_single_material(square4):
    params = replace(P, mu_E=15.0, mu_P=15.0)
    one = Mesh.from_cells(square4.vertices, square4.cells, np.full(square4.n_cells, CellTag.E),
                          lambda m, s: np.full(len(m), FacetTag.GDIR_E))
    assert np.abs(dense(assemble_a1h(square4, params, 0)) - dense(assemble_a1h(one, params, 0))).max() < 1e-9


@pytest.mark.parametrize("k", [0, 1, 2])
def test_a1h_coercive_on_constrained_space(k, square2):
    params = SQUARE_PARAMS.with_penalties(k)
    f = free_dofs(square2, k)
    for A in (assemble_a1h(square2, params, k), assemble_ahat1(square2, params, k)):
        ev = np.linalg.eigvalsh(dense(A)[np.ix_(f, f)])
        assert ev.min() > 0


def test_ahat1_is_a1h_without_consistency(square4):
    assert np.abs(dense(assemble_ahat1(square4, P, 0)) - dense(assemble_a1h(square4, P, 0, consistency=False))).max() < 1e-13


# ----------------------------------------------------------------------
# pressure forms

def test_a2_kernel_and_linear_field(square4):
    Q = spaces(square4, 0).Q
    params = replace(P, kappa=1.0, eta=1.0)
    A = assemble_a2_cg(square4, params, 0)
    one = np.ones(Q.n_dofs)
    assert np.abs(A @ one).max() < 1e-13
    px = interpolate(Q.space, square4, lambda X: X[..., 0], Q)
    assert abs(px @ A @ px - 0.5) < 1e-13
    A10 = assemble_a2_cg(square4, replace(params, kappa=10.0), 0)
    assert np.abs(dense(A10) - 10 * dense(A)).max() < 1e-12


@pytest.mark.parametrize("k", [0, 1])
def test_a2h_consistency_with_cg(k, square4):
    params = SQUARE_PARAMS.with_penalties(k)
    Qc = spaces(square4, k, CG_PRESSURE).Q
    Qd = spaces(square4, k, DG_PRESSURE).Q
    inj = np.zeros((Qd.n_dofs, Qc.n_dofs))
    inj[Qd.cell_dofs.ravel(), Qc.cell_dofs.ravel()] = 1.0
    Ad = dense(assemble_a2h_dg(square4, params, k))
    Ac = dense(assemble_a2_cg(square4, params, k))
    assert np.abs(inj.T @ Ad @ inj - Ac).max() < 1e-11 * np.abs(Ac).max()
    assert np.abs(Ad @ np.ones(Qd.n_dofs)).max() < 1e-10 * np.abs(Ad).max()


def test_a2h_positive_with_pressure_dirichlet():
    mesh = free_boundary_square(2)
    params = SQUARE_PARAMS.with_penalties(0)
    params = replace(params, beta_p=2500.0)
    ev = np.linalg.eigvalsh(dense(assemble_a2h_dg(mesh, params, 0)))
    assert ev.min() > 0


def test_b1_unit_square(square2):
    V, Z = spaces(square2, 0).V, spaces(square2, 0).Z
    u = interpolate(V.space, square2, vec(lambda x, y: (x, 0 * x)), V)
    assert abs(np.ones(Z.n_dofs) @ assemble_b1(square2, P, 0) @ u + 1.0) < 1e-14


def test_b1_divergence_free_field(square4):
    def curl(x, y):
        # curl of the bubble x^2 (1-x)^2 y^2 (1-y)^2
        gx = 2 * x * (1 - x) * (1 - 2 * x) * y ** 2 * (1 - y) ** 2
        gy = 2 * y * (1 - y) * (1 - 2 * y) * x ** 2 * (1 - x) ** 2
        return gy, -gx
    for k in (0, 1, 2):
        S = spaces(square4, k)
        u = interpolate(S.V.space, square4, vec(curl), S.V)
        ref, X, W = cell_quadrature(square4, np.arange(square4.n_cells), 8)
        div = eval_basis(S.V.space, square4, np.arange(square4.n_cells), ref, 1, S.V.cell_signs).div
        assert np.abs(np.einsum("cqn,cn->cq", div, u[S.V.cell_dofs])).max() < 1e-12
        assert np.abs(assemble_b1(square4, P, k) @ u).max() < 1e-13


@given(st.integers(0, 2), st.integers(0, 2 ** 31 - 1))
def test_b1_random_consistency(k, seed):
    mesh = build_mesh(SQUARE, 2)
    S = spaces(mesh, k)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(S.V.n_dofs)
    psi = rng.standard_normal(S.Z.n_dofs)
    cells = np.arange(mesh.n_cells)
    ref, X, W = cell_quadrature(mesh, cells, 3 * k + 6)
    div = np.einsum("cqn,cn->cq", eval_basis(S.V.space, mesh, cells, ref, 1, S.V.cell_signs).div,
                    u[S.V.cell_dofs])
    ps = np.einsum("cqn,cn->cq", eval_basis(S.Z.space, mesh, cells, ref, 0).values, psi[S.Z.cell_dofs])
    direct = -np.sum(ps * div * W)
    assert abs(psi @ assemble_b1(mesh, P, k) @ u - direct) < 1e-13 * max(1.0, np.abs(ps * div * W).sum())


def test_b2_values(square2):
    S = spaces(square2, 0)
    B = assemble_b2(square2, P, 0)
    assert abs(np.ones(S.Z.n_dofs) @ B @ np.ones(S.Q.n_dofs) - 2.5e-5) < 1e-18
    ecells = np.flatnonzero(square2.cell_tag == CellTag.E)
    erows = S.Z.cell_dofs[ecells].ravel()
    assert np.all(dense(B)[erows] == 0.0)
    assert assemble_b2(square2, replace(P, alpha=0.0), 0).count_nonzero() == 0


def test_a3_and_tilde_a2(square2):
    S = spaces(square2, 0)
    ones = replace(P, lambda_E=1.0, lambda_P=1.0)
    assert abs(np.ones(S.Z.n_dofs) @ assemble_a3(square2, ones, 0) @ np.ones(S.Z.n_dofs) - 1.0) < 1e-14
    A3 = dense(assemble_a3(square2, P, 0))
    lam = np.where(square2.cell_tag == CellTag.E, P.lambda_E, P.lambda_P)
    expect = np.zeros(S.Z.n_dofs)
    expect[S.Z.cell_dofs[:, 0]] = square2.areas / lam
    assert np.allclose(A3, np.diag(expect), rtol=1e-14, atol=0)
    assert assemble_tilde_a2(square2, replace(P, c0=0.0, alpha=0.0), 0).count_nonzero() == 0


def test_riesz_block_limit(square2):
    ws = []
    for lam in (1e2, 1e4, 1e6, np.inf):
        ws.append(dense(assemble_riesz_phi(square2, replace(P, lambda_E=lam, lambda_P=lam), 0)).diagonal())
    ws = np.array(ws)
    assert np.all(np.diff(ws, axis=0) < 0)
    mu = np.where(square2.cell_tag == CellTag.E, P.mu_E, P.mu_P)
    assert np.allclose(ws[-1][spaces(square2, 0).Z.cell_dofs[:, 0]], square2.areas / (2 * mu), rtol=1e-14)


# ----------------------------------------------------------------------
# properties

@pytest.mark.parametrize("k", [0, 1, 2])
def test_square_forms_symmetric(k, square4):
    params = SQUARE_PARAMS.with_penalties(k)
    for A in (assemble_a1h(square4, params, k), assemble_ahat1(square4, params, k),
              assemble_a2_cg(square4, params, k), assemble_a2h_dg(square4, params, k),
              assemble_a3(square4, params, k), assemble_tilde_a2(square4, params, k)):
        M = dense(A)
        assert np.abs(M - M.T).max() <= 1e-12 * np.abs(M).max()


@given(st.floats(0.1, 100.0))
def test_mu_and_kappa_scaling(s):
    mesh = build_mesh(SQUARE, 2)
    p2 = replace(P, mu_E=P.mu_E * s, mu_P=P.mu_P * s, kappa=P.kappa * s)
    for f in (assemble_a1h, assemble_ahat1, assemble_a2h_dg):
        a, b = dense(f(mesh, P, 0)), dense(f(mesh, p2, 0))
        assert np.abs(b - s * a).max() <= 1e-12 * np.abs(b).max()
    a, b = dense(assemble_a2_cg(mesh, P, 0)), dense(assemble_a2_cg(mesh, p2, 0))
    assert np.abs(b - s * a).max() <= 1e-12 * np.abs(b).max()


# ----------------------------------------------------------------------
# right-hand side

def test_zero_data_zero_rhs(square2):
    for form in (CG_PRESSURE, DG_PRESSURE):
        case = Case("zero", SQUARE, P, interface_correction=False)
        r = assemble_rhs(square2, P, 0, form, case)
        assert not r.F.any() and not r.G.any() and not r.u_fixed[1].any()


def test_constant_body_load(square2):
    case = Case("g", SQUARE, P, interface_correction=False,
                _body=lambda X, tag: np.stack([np.zeros(X.shape[:-1]), -np.ones(X.shape[:-1])], -1))
    V = spaces(square2, 0).V
    v = interpolate(V.space, square2, vec(lambda x, y: (0 * x, 1 + 0 * x)), V)
    F = assemble_rhs(square2, P, 0, CG_PRESSURE, case).F
    assert abs(F @ v + 1.0) < 1e-14


def test_missing_exact_data(square2):
    with pytest.raises(MissingData):
        assemble_rhs(square2, P, 0, CG_PRESSURE, Case("x", SQUARE, P, interface_correction=True))


def test_interface_correction_support(square4):
    case = square_case(0)
    corr = assemble_rhs(square4, P, 0, CG_PRESSURE, case).parts["interface"]
    V = spaces(square4, 0).V
    sig = square4.facets_with_tag(FacetTag.SIGMA)
    on_sigma_cells = np.unique(V.cell_dofs[square4.facet_cells[sig].ravel()])
    assert np.abs(corr).max() > 0
    off = np.setdiff1d(np.arange(V.n_dofs), on_sigma_cells)
    assert np.all(corr[off] == 0.0)
    # only normal DoFs of non-SIGMA facets vanish, the SIGMA facet DoFs carry the term
    assert np.abs(corr[V.facet_dofs[sig].ravel()]).max() > 0


def test_parameter_validation():
    with pytest.raises(ValueError):
        ModelParameters(mu_E=-1.0)
    with pytest.raises(ValueError):
        ModelParameters(alpha=1.5)
    with pytest.raises(ValueError):
        ModelParameters(c0=-1.0)
    assert ModelParameters(mu_E=3.0, mu_P=7.0).mu0 == 7.0
    assert ModelParameters().penalties(1) == (2500.0, 2500.0)
