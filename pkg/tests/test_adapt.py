import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdivbiot.adapt import FACET_MARKING, SPLIT_MARKING, adaptive_loop, dorfler_mark, mark_cells
from hdivbiot.cases import square_case
from hdivbiot.estimate import estimate
from hdivbiot.exceptions import AllZero
from hdivbiot.mesh import build_mesh
from hdivbiot.solve import solve_direct
from hdivbiot.system import apply_scaling, build_system

from conftest import SQUARE

indicators = st.lists(st.floats(0.0, 1e3, allow_nan=False), min_size=1, max_size=40).filter(
    lambda v: sum(x * x for x in v) > 0)


@settings(max_examples=1000)
@given(indicators, st.floats(1e-3, 1.0))
def test_dorfler_bulk_and_minimal(eta, zeta):
    eta = np.array(eta)
    sq = eta ** 2
    marked = dorfler_mark(eta, zeta)
    assert np.all(np.diff(marked) > 0)
    assert sq[marked].sum() >= zeta * sq.sum() * (1 - 1e-12)
    best = np.sort(sq)[::-1][:len(marked) - 1].sum()
    assert best < zeta * sq.sum()


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=8).filter(lambda v: max(v) > 0),
       st.floats(0.05, 1.0))
def test_dorfler_cardinality_brute_force(eta, zeta):
    sq = np.array(eta) ** 2
    n = len(sq)
    need = min(len(c) for r in range(1, n + 1) for c in itertools.combinations(range(n), r)
               if sq[list(c)].sum() >= zeta * sq.sum())
    assert len(dorfler_mark(np.array(eta), zeta)) == need


def test_dorfler_examples():
    assert list(dorfler_mark([3.0, 1.0, 1.0, 1.0], 0.5)) == [0]
    assert list(dorfler_mark([1.0, 2.0, 0.0, 1.0], 1.0)) == [0, 1, 3]
    assert list(dorfler_mark([1.0, 1.0, 1.0], 0.5)) == [0, 1]
    with pytest.raises(AllZero):
        dorfler_mark([0.0, 0.0], 0.5)
    with pytest.raises(ValueError):
        dorfler_mark([1.0], 0.0)


@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=30, unique=True), st.floats(0.01, 1.0),
       st.randoms())
def test_dorfler_permutation_invariant(eta, zeta, rnd):
    eta = np.array(eta)
    perm = np.array(rnd.sample(range(len(eta)), len(eta)))
    a = set(dorfler_mark(eta, zeta))
    b = set(perm[dorfler_mark(eta[perm], zeta)])
    assert a == b


@given(indicators, st.floats(1e-3, 1.0), st.floats(1e-3, 1.0))
def test_dorfler_monotone_in_zeta(eta, z1, z2):
    lo, hi = sorted((z1, z2))
    assert len(dorfler_mark(eta, lo)) <= len(dorfler_mark(eta, hi))


@pytest.fixture(scope="module")
def square_report():
    case = square_case(0)
    mesh = build_mesh(SQUARE, 4)
    sol, _ = solve_direct(apply_scaling(build_system(mesh, case.params.with_penalties(0), "CG_PRESSURE",
                                                     case, 0)))
    return mesh, estimate(sol, case)


def test_facet_marking_refines_both_neighbours(square_report):
    mesh, rep = square_report
    split = mark_cells(rep, mesh, 0.5, SPLIT_MARKING)
    facet = mark_cells(rep, mesh, 0.5, FACET_MARKING)
    assert len(split) and len(facet)
    big = rep.sigma_facets[np.argmax(rep.lam)]
    if rep.lam.max() ** 2 > rep.cell_sq.max():
        assert set(mesh.facet_cells[big]) <= set(facet)
    with pytest.raises(ValueError):
        mark_cells(rep, mesh, 0.5, "nodes")


@pytest.fixture(scope="module")
def square_traces():
    case = square_case(0)
    adaptive = adaptive_loop(case, 0.5, 4, resolution=2)
    uniform = adaptive_loop(case, 0.5, 3, resolution=2, uniform=True, smoothing=False)
    return adaptive, uniform


def test_adaptive_loop_grows_and_reduces_error(square_traces):
    adaptive, _ = square_traces
    assert np.all(np.diff(adaptive.dofs) > 0)
    assert adaptive.column("triple")[-1] < adaptive.column("triple")[0]
    assert all(r.marked > 0 for r in adaptive.rows[:-1])
    for a, b, r in zip(adaptive.meshes, adaptive.meshes[1:], adaptive.rows):
        assert np.isclose(b.areas.sum(), 1.0) and b.n_cells > a.n_cells


def test_uniform_trace_matches_first_order(square_traces):
    _, uniform = square_traces
    ncells = [m.n_cells for m in uniform.meshes]
    assert ncells == [ncells[0] * 4 ** i for i in range(len(ncells))]
    rates = uniform.rates("triple")
    assert np.all(np.abs(rates - 1.0) < 0.25)


def test_trace_csv(tmp_path, square_traces):
    adaptive, _ = square_traces
    adaptive.write_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "dofs", "e_u", "e_p", "e_phi", "xi", "eff", "marked", "seconds"]
    assert len(rows) == len(adaptive.rows) + 1
    assert rows[1][0] == "0" and "e" in rows[1][2]
