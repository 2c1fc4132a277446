"""Monolithic saddle-point system, essential constraints and scaling.

Unknown ordering of the reduced system: free displacement DoFs, free
fluid-pressure DoFs, all total-pressure DoFs and, when attached, the
mean-value multiplier.  Block layout of the full matrix::

    [ a1h     0            b1^T ]
    [ 0      -(ta2 + a2)   b2^T ]
    [ b1      b2          -a3   ]
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.io
import scipy.sparse as sp

from .forms import (CG_PRESSURE, DG_PRESSURE, ModelParameters, assemble_a1h, assemble_a2_cg,
                    assemble_a2h_dg, assemble_a3, assemble_b1, assemble_b2, assemble_rhs,
                    assemble_tilde_a2, displacement_neumann_facets, pressure_dirichlet_facets,
                    spaces, total_pressure_integrals, volume_degree, cell_quadrature)
from .mesh import Mesh


@dataclass(eq=False)
class BlockSystem:
    """Reduced symmetric system together with what is needed to expand solutions.

    ``blocks`` keeps the unreduced form matrices (``A11``, ``A22``, ``A31``,
    ``A32``, ``A33``, plus ``tilde_a2`` and ``a2`` for the preconditioner).
    ``scale`` is 1 for the plain system and ``mu0`` after :func:`apply_scaling`.
    """

    mesh: Mesh
    params: ModelParameters
    formulation: str
    k: int
    case: object
    blocks: dict
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_u: np.ndarray
    free_p: np.ndarray
    fixed_u: tuple
    fixed_p: tuple
    mean: float | None = None
    scale: float = 1.0
    info: dict = field(default_factory=dict)

    @property
    def spaces(self):
        return spaces(self.mesh, self.k, self.formulation)

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        S = self.spaces
        return len(self.free_u), len(self.free_p), S.Z.n_dofs, int(self.mean is not None)

    @property
    def n_dofs(self) -> int:
        """Total number of discrete unknowns (constrained DoFs included)."""
        S = self.spaces
        return S.V.n_dofs + S.Q.n_dofs + S.Z.n_dofs

    def slices(self):
        nu, np_, nz, nm = self.sizes
        return (slice(0, nu), slice(nu, nu + np_), slice(nu + np_, nu + np_ + nz),
                slice(nu + np_ + nz, nu + np_ + nz + nm))

    def scaling_vector(self) -> np.ndarray:
        """Diagonal ``C`` with ``x_true = C x`` (ones when unscaled)."""
        su, sq, sz, sm = self.slices()
        c = np.ones(self.matrix.shape[0])
        c[sq] = self.scale
        c[sz] = self.scale
        return c

    def expand(self, x: np.ndarray) -> "Solution":
        """Full coefficient vectors from a reduced (possibly scaled) solution."""
        x = np.asarray(x, dtype=float) * self.scaling_vector()
        S = self.spaces
        su, sq, sz, sm = self.slices()
        u = np.zeros(S.V.n_dofs)
        u[self.free_u] = x[su]
        u[self.fixed_u[0]] = self.fixed_u[1]
        p = np.zeros(S.Q.n_dofs)
        p[self.free_p] = x[sq]
        p[self.fixed_p[0]] = self.fixed_p[1]
        mult = float(x[sm][0]) if self.mean is not None else None
        return Solution(u, p, x[sz].copy(), mult, self)

    def reduce(self, sol: "Solution") -> np.ndarray:
        """Reduced (scaled) vector of a full solution; inverse of :meth:`expand`."""
        parts = [sol.u[self.free_u], sol.p[self.free_p], sol.phi]
        if self.mean is not None:
            parts.append([sol.multiplier or 0.0])
        return np.concatenate(parts) / self.scaling_vector()

    def residual(self, x: np.ndarray) -> float:
        """Relative residual ``||M x - b|| / ||b||`` (absolute when ``b = 0``)."""
        r = np.linalg.norm(self.matrix @ x - self.rhs)
        nb = np.linalg.norm(self.rhs)
        return r / nb if nb > 0 else r


@dataclass(eq=False)
class Solution:
    u: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    multiplier: float | None
    system: BlockSystem

    def mean_total_pressure(self) -> float:
        w = total_pressure_integrals(self.system.mesh, self.system.k)
        return float(w @ self.phi) / float(w.sum())


def build_blocks(mesh: Mesh, params: ModelParameters, formulation: str, k: int) -> dict:
    A11 = assemble_a1h(mesh, params, k)
    ta2 = assemble_tilde_a2(mesh, params, k, formulation)
    a2 = assemble_a2_cg(mesh, params, k) if formulation == CG_PRESSURE else assemble_a2h_dg(mesh, params, k)
    return {
        "A11": A11,
        "A22": (-(ta2 + params.dt * a2)).tocsr(),
        "A31": assemble_b1(mesh, params, k),
        "A32": assemble_b2(mesh, params, k, formulation),
        "A33": (-assemble_a3(mesh, params, k)).tocsr(),
        "tilde_a2": ta2,
        "a2": a2,
    }


def full_matrix(blocks: dict) -> sp.csr_matrix:
    A31, A32 = blocks["A31"], blocks["A32"]
    return sp.bmat([[blocks["A11"], None, A31.T],
                    [None, blocks["A22"], A32.T],
                    [A31, A32, blocks["A33"]]], format="csr")


def build_system(mesh: Mesh, params: ModelParameters, formulation: str, case, k: int = 0,
                 mean_constraint: bool | None = None) -> BlockSystem:
    """Assemble, eliminate essential DoFs symmetrically and optionally attach the mean row.

    ``mean_constraint=None`` takes the case's setting.
    """
    S = spaces(mesh, k, formulation)
    blocks = build_blocks(mesh, params, formulation, k)
    rhs = assemble_rhs(mesh, params, k, formulation, case)
    nV, nQ, nZ = S.V.n_dofs, S.Q.n_dofs, S.Z.n_dofs
    M = full_matrix(blocks)
    b = np.concatenate([rhs.F, rhs.G, np.zeros(nZ)])
    fixed = np.concatenate([rhs.u_fixed[0], nV + rhs.p_fixed[0]]).astype(np.int64)
    vals = np.concatenate([rhs.u_fixed[1], rhs.p_fixed[1]])
    free = np.setdiff1d(np.arange(nV + nQ + nZ), fixed)
    Mc = M[:, fixed]
    b_red = b[free] - (Mc @ vals)[free]
    M_red = M[free][:, free].tocsr()
    free_u = free[free < nV]
    free_p = free[(free >= nV) & (free < nV + nQ)] - nV
    system = BlockSystem(mesh, params, formulation, k, case, blocks, M_red, b_red, free_u, free_p,
                         rhs.u_fixed, rhs.p_fixed, info={"rhs": rhs})
    if mean_constraint is None:
        mean_constraint = bool(getattr(case, "mean_constraint", False))
    if mean_constraint:
        system = attach_mean_constraint(system)
    return system


def exact_mean_total_pressure(mesh: Mesh, case, k: int = 0) -> float:
    """Mean of the exact total pressure (0 without a manufactured solution)."""
    exact = getattr(case, "exact", None)
    if exact is None:
        return 0.0
    _, X, W = cell_quadrature(mesh, np.arange(mesh.n_cells), volume_degree(k) + 4)
    tags = np.broadcast_to(mesh.cell_tag[:, None], X.shape[:2])
    return float(np.sum(exact.phi(X, tags) * W) / np.sum(W))


def attach_mean_constraint(system: BlockSystem, mean: float | None = None) -> BlockSystem:
    """Append the row ``int psi_h`` fixing the mean of the total pressure.

    The right-hand side is ``|Omega|`` times the prescribed mean, by default
    the exact mean of the case.
    """
    if system.mean is not None:
        return system
    if system.scale != 1.0:
        raise ValueError("attach the mean constraint before scaling")
    mesh = system.mesh
    if mean is None:
        mean = exact_mean_total_pressure(mesh, system.case, system.k)
    w = total_pressure_integrals(mesh, system.k)
    nu, np_, nz, _ = system.sizes
    row = sp.csr_matrix(np.concatenate([np.zeros(nu + np_), w])[None, :])
    M = sp.bmat([[system.matrix, row.T], [row, None]], format="csr")
    rhs = np.concatenate([system.rhs, [mean * w.sum()]])
    return replace(system, matrix=M, rhs=rhs, mean=float(mean))


def apply_scaling(system: BlockSystem, params: ModelParameters | None = None) -> BlockSystem:
    """Scale momentum rows by ``1/mu0`` and the pressure unknowns by ``1/mu0``.

    With ``C = diag(1, mu0, mu0, 1)`` the scaled matrix is ``C M C / mu0``,
    which keeps symmetry; :meth:`BlockSystem.expand` undoes the unknown
    rescaling.
    """
    params = params if params is not None else system.params
    mu0 = params.mu0
    if system.scale != 1.0:
        raise ValueError("system is already scaled")
    tmp = replace(system, scale=mu0)
    c = tmp.scaling_vector()
    C = sp.diags(c)
    M = (C @ system.matrix @ C / mu0).tocsr()
    return replace(tmp, matrix=M, rhs=c * system.rhs / mu0)


def symmetry_error(M) -> float:
    """``max|M - M^T| / max|M|``."""
    M = sp.csr_matrix(M)
    d = (M - M.T).tocoo()
    top = np.abs(d.data).max() if d.nnz else 0.0
    return float(top / np.abs(M.data).max())


def has_nullspace_risk(system: BlockSystem) -> bool:
    """True when nothing pins the constant total pressure.

    That is the case without traction (displacement-Neumann) boundary,
    which includes having no pressure-Dirichlet facet, and without a mean
    constraint.
    """
    mesh = system.mesh
    return (system.mean is None and len(displacement_neumann_facets(mesh)) == 0
            and len(pressure_dirichlet_facets(mesh)) == 0)


def export_matrix(system: BlockSystem, path) -> None:
    """Write the reduced matrix in Matrix Market coordinate format."""
    scipy.io.mmwrite(str(path), system.matrix, comment="hdivbiot reduced saddle-point matrix",
                     field="real", symmetry="general")
