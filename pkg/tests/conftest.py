from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hdivbiot.cases import square_case
from hdivbiot.mesh import CellTag, FacetTag, GeometrySpec, Mesh, build_mesh

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SQUARE = GeometrySpec("UNIT_SQUARE_SPLIT", {"split": 0.5})


@contextmanager
def unvalidated():
    """Allow meshes without a Dirichlet part (pure-traction test problems)."""
    old = Mesh.validate
    Mesh.validate = lambda self: None
    try:
        yield
    finally:
        Mesh.validate = old


def two_cell_mesh(tag_a=CellTag.P, tag_b=CellTag.P) -> Mesh:
    """Unit square cut along its diagonal, all boundary displacement-Neumann."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = np.array([[2, 0, 1], [0, 2, 3]])

    def bnd(mids, sub):
        return np.where(sub == CellTag.E, FacetTag.GNEU_E, FacetTag.GNEU_P)
    with unvalidated():
        return Mesh.from_cells(vertices, cells, np.array([tag_a, tag_b]), bnd)


def free_boundary_square(n: int) -> Mesh:
    """Split square with traction (Neumann) conditions on the whole boundary."""
    def bnd(mids, sub):
        return np.where(sub == CellTag.E, FacetTag.GNEU_E, FacetTag.GNEU_P)
    with unvalidated():
        return build_mesh(GeometrySpec("UNIT_SQUARE_SPLIT", {"split": 0.5}, bnd), n)


@pytest.fixture(scope="session")
def square2():
    return build_mesh(SQUARE, 2)


@pytest.fixture(scope="session")
def square4():
    return build_mesh(SQUARE, 4)


@pytest.fixture(scope="session")
def case0():
    return square_case(0)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
