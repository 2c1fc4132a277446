import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdivbiot.cases import lshape_case, stripe_case
from hdivbiot.exceptions import InvalidGeometry
from hdivbiot.mesh import (CellTag, FacetTag, GeometrySpec, build_mesh, cell_quality,
                           laplacian_smooth, refine, uniform_refine, write_vtk)

from conftest import SQUARE

LSHAPE = lshape_case().geometry
STRIPE = stripe_case().geometry


def check_invariants(mesh, area):
    mesh.validate()
    interior = mesh.facet_cells[:, 1] >= 0
    # every interior facet shared by two cells, boundary by one
    counts = np.bincount(mesh.cell_facets.ravel(), minlength=mesh.n_facets)
    assert np.all(counts == np.where(interior, 2, 1))
    t0 = mesh.cell_tag[mesh.facet_cells[:, 0]]
    t1 = mesh.cell_tag[np.maximum(mesh.facet_cells[:, 1], 0)]
    sigma = mesh.facet_tag == FacetTag.SIGMA
    assert np.array_equal(sigma, interior & (t0 != t1))
    # SIGMA normal points from P to E
    assert np.all(t0[sigma] == CellTag.P)
    assert np.all(mesh.areas > 0)
    assert abs(mesh.areas.sum() - area) < 1e-12 * area
    # no hanging nodes: every facet vertex pair appears exactly once
    key = np.sort(mesh.facets, axis=1)
    assert len(np.unique(key, axis=0)) == mesh.n_facets
    # cells list facets through their vertices
    for j in range(3):
        f = mesh.cell_facets[:, j]
        a = mesh.cells[:, (j + 1) % 3]
        b = mesh.cells[:, (j + 2) % 3]
        assert np.array_equal(np.sort(np.column_stack([a, b]), axis=1), key[f])


def test_square_resolution_two_counts():
    m = build_mesh(SQUARE, 2)
    assert m.n_cells == 8
    assert np.sum(m.cell_tag == CellTag.E) == 4
    assert np.sum(m.cell_tag == CellTag.P) == 4
    assert len(m.facets_with_tag(FacetTag.SIGMA)) == 2


def test_square_resolution_one_invalid():
    with pytest.raises(InvalidGeometry):
        build_mesh(SQUARE, 1)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_square_invariants(n):
    m = build_mesh(SQUARE, n)
    assert m.n_cells == 2 * n * n
    check_invariants(m, 1.0)
    # congruent cells
    assert np.allclose(m.areas, 0.5 / n ** 2, rtol=1e-14)


@pytest.mark.parametrize("n", [2, 4])
def test_lshape_sigma_separates_subdomains(n):
    m = build_mesh(LSHAPE, n)
    check_invariants(m, 3.0)
    s = m.facets_with_tag(FacetTag.SIGMA)
    tags = m.cell_tag[m.facet_cells[s]]
    assert np.all(np.sort(tags, axis=1) == [CellTag.E, CellTag.P])
    # interface length of the default zig-zag
    assert np.isclose(m.facet_lengths[s].sum(), 0.5 + 0.5 + np.sqrt(0.5))


def test_lshape_unrepresentable():
    with pytest.raises(InvalidGeometry):
        build_mesh(LSHAPE, 1)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_stripe_invariants(n):
    m = build_mesh(STRIPE, n)
    check_invariants(m, 0.25 * 0.08)
    tags = set(m.facet_tag[m.facet_cells[:, 1] < 0].tolist())
    assert tags == {FacetTag.GDIR_E, FacetTag.GNEU_E, FacetTag.GDIR_P, FacetTag.GNEU_P}


def test_boundary_tags_partition_square(square4):
    b = square4.facet_cells[:, 1] < 0
    assert np.isclose(square4.facet_lengths[b].sum(), 4.0)
    assert set(square4.facet_tag[b].tolist()) <= {FacetTag.GDIR_E, FacetTag.GDIR_P}


def test_refine_all_doubles():
    m = build_mesh(SQUARE, 2)
    r = refine(m, np.arange(m.n_cells))
    assert r.n_cells >= 2 * m.n_cells
    check_invariants(r, 1.0)
    assert np.array_equal(np.sort(np.unique(r.parent)), np.arange(m.n_cells))


def test_refine_empty_is_identity():
    m = build_mesh(SQUARE, 2)
    assert refine(m, set()) is m


def test_refine_single_cell_conforming():
    m = build_mesh(SQUARE, 2)
    for c in range(m.n_cells):
        r = refine(m, [c])
        check_invariants(r, 1.0)
        assert np.sum(r.parent == c) >= 2
        # tags inherited
        assert np.array_equal(r.cell_tag, m.cell_tag[r.parent])


@given(st.lists(st.integers(0, 31), min_size=1, max_size=8), st.integers(1, 3))
def test_refine_random_preserves_invariants(marked, rounds):
    m = build_mesh(SQUARE, 4)
    rng = np.random.default_rng(len(marked))
    for _ in range(rounds):
        m = refine(m, [c % m.n_cells for c in marked])
        check_invariants(m, 1.0)
        marked = rng.integers(0, m.n_cells, size=3).tolist()


def test_refine_lshape_keeps_interface():
    m = build_mesh(LSHAPE, 2)
    near = np.flatnonzero(np.hypot(*m.centroids.T) < 0.6)
    r = refine(m, near)
    check_invariants(r, 3.0)
    s = r.facets_with_tag(FacetTag.SIGMA)
    assert np.isclose(r.facet_lengths[s].sum(), 1.0 + np.sqrt(0.5))


def test_smoothing_structured_fixed_point():
    m = build_mesh(SQUARE, 4)
    s = laplacian_smooth(m)
    assert np.allclose(s.vertices, m.vertices, atol=1e-14)


def test_smoothing_keeps_constrained_vertices():
    m = build_mesh(LSHAPE, 2)
    m = refine(m, np.flatnonzero(np.hypot(*m.centroids.T) < 0.5))
    s = laplacian_smooth(m)
    fixed = m.fixed_vertices()
    assert np.array_equal(s.vertices[fixed], m.vertices[fixed])
    assert np.all(s.areas > 0)
    check_invariants(s, 3.0)


def test_smoothing_perturbed_vertex_quality():
    m = build_mesh(SQUARE, 4)
    free = np.flatnonzero(~m.fixed_vertices())
    rng = np.random.default_rng(3)
    for v in free:
        xy = m.vertices.copy()
        xy[v] += rng.uniform(-0.08, 0.08, 2)
        pm = type(m).from_cells(xy, m.cells, m.cell_tag, m.boundary_tag_map())
        before = cell_quality(pm).min()
        after = cell_quality(laplacian_smooth(pm)).min()
        assert after >= before - 1e-14


def test_jump_of_continuous_field_vanishes(square4):
    # a continuous P1 field evaluated from both sides agrees at every interior facet
    f = lambda X: 1.0 + 2.0 * X[..., 0] - 3.0 * X[..., 1]  # noqa: E731
    inner = np.flatnonzero(square4.facet_cells[:, 1] >= 0)
    for side in (0, 1):
        c = square4.facet_cells[inner, side]
        j = square4.facet_local[inner, side]
        a = square4.vertices[square4.cells[c, (j + 1) % 3]]
        b = square4.vertices[square4.cells[c, (j + 2) % 3]]
        mids = 0.5 * (a + b)
        assert np.allclose(mids, square4.facet_midpoints[inner], atol=1e-15)
        assert np.allclose(f(mids), f(square4.facet_midpoints[inner]), atol=1e-15)


def test_write_vtk(tmp_path, square2):
    p = tmp_path / "m.vtk"
    write_vtk(p, square2, cell_data={"q": np.arange(8.0)},
              point_data={"u": np.zeros((9, 2)), "p": np.ones(9)})
    text = p.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "CELLS %d" % (8 + square2.n_facets) in text
    assert "SCALARS facet_tag int 1" in text and "VECTORS u double" in text


def test_uniform_refine_area():
    m = uniform_refine(build_mesh(LSHAPE, 2), 2)
    check_invariants(m, 3.0)
