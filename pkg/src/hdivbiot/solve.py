"""Direct solves, the block-diagonal Riesz preconditioner and MINRES."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .exceptions import NotSPD, SingularSystem
from .forms import assemble_ahat1, assemble_riesz_phi
from .system import BlockSystem, Solution, has_nullspace_risk


@dataclass
class SolveReport:
    iterations: int
    residual: float
    seconds: float
    converged: bool
    history: list = field(default_factory=list)


def _symmetric_lu(A):
    """Sparse LU with symmetric ordering and diagonal pivoting preference."""
    return sla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options=dict(SymmetricMode=True))


def _equilibration(M) -> np.ndarray:
    d = np.abs(M.diagonal())
    rown = np.sqrt(np.asarray(abs(M).multiply(abs(M)).sum(axis=1)).ravel())
    d = np.where(d > 0, d, rown)
    return np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)


def solve_direct(system: BlockSystem, refinement_steps: int = 3, check: bool = True):
    """Sparse LU solve of the reduced system.

    The matrix is symmetrically equilibrated by its diagonal before the
    factorisation and the solution is polished by a few steps of iterative
    refinement.  Returns ``(Solution, SolveReport)``.
    """
    if has_nullspace_risk(system):
        raise SingularSystem("constant total pressure is not fixed: no traction or pressure "
                             "Dirichlet boundary and no mean constraint")
    t0 = time.perf_counter()
    M = system.matrix.tocsc()
    d = _equilibration(M)
    A = (sp.diags(d) @ M @ sp.diags(d)).tocsc()
    try:
        lu = _symmetric_lu(A)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    b = d * system.rhs
    y = lu.solve(b)
    for _ in range(refinement_steps):
        y += lu.solve(b - A @ y)
    x = d * y
    if not np.all(np.isfinite(x)):
        raise SingularSystem("factorisation produced non-finite values")
    res = system.residual(x)
    if check and res > 1e-10:
        raise SingularSystem(f"direct solve residual {res:.3e} exceeds 1e-10")
    report = SolveReport(0, res, time.perf_counter() - t0, True)
    return system.expand(x), report


# ----------------------------------------------------------------------
# preconditioner


class _SPDFactor:
    def __init__(self, A, name):
        A = sp.csc_matrix(A)
        self.n = A.shape[0]
        if self.n == 0:
            self.lu = None
            return
        try:
            lu = _symmetric_lu(A)
        except RuntimeError as exc:
            raise NotSPD(f"block {name}: {exc}") from exc
        diag = lu.U.diagonal()
        if not (np.array_equal(lu.perm_r, lu.perm_c) and np.all(diag > 0)):
            raise NotSPD(f"block {name} is not symmetric positive definite")
        self.lu = lu

    def solve(self, r):
        return self.lu.solve(r) if self.lu is not None else r


@dataclass(eq=False)
class Preconditioner:
    """Block-diagonal ``diag(A1, C1, C2, s)`` with factorised blocks.

    ``A1`` is the volume-plus-penalty displacement operator, ``C1`` the
    fluid-pressure operator ``tilde_a2 + dt a2`` and ``C2`` the total-pressure
    mass weighted by ``1/lambda + 1/(2 mu)``; ``s`` is the scalar Schur
    complement of the mean constraint when present.  Blocks are given in the
    (possibly scaled) unknowns of the system.
    """

    blocks: list
    factors: list
    slices: tuple

    def apply(self, r: np.ndarray) -> np.ndarray:
        z = np.empty_like(r)
        for sl, f in zip(self.slices, self.factors):
            if sl.stop > sl.start:
                z[sl] = f.solve(r[sl])
        return z

    __call__ = apply

    def as_linear_operator(self):
        n = self.slices[-1].stop
        return sla.LinearOperator((n, n), matvec=self.apply, dtype=float)


class _Scalar:
    def __init__(self, s):
        if not s > 0:
            raise NotSPD("mean-constraint block is not positive")
        self.s = s

    def solve(self, r):
        return r / self.s


def build_preconditioner(system: BlockSystem, use_a1h: bool = False) -> Preconditioner:
    """Riesz-map preconditioner for a built (optionally scaled) system.

    ``use_a1h`` swaps the displacement block for the full SIP matrix.
    """
    mesh, params, k = system.mesh, system.params, system.k
    c = system.scale
    A1 = system.blocks["A11"] if use_a1h else assemble_ahat1(mesh, params, k)
    A1 = A1[system.free_u][:, system.free_u] / c
    C1 = (system.blocks["tilde_a2"] + params.dt * system.blocks["a2"])
    C1 = C1[system.free_p][:, system.free_p] * c
    C2 = assemble_riesz_phi(mesh, params, k) * c
    blocks = [A1.tocsc(), C1.tocsc(), C2.tocsc()]
    factors = [_SPDFactor(A1, "displacement"), _SPDFactor(C1, "fluid pressure"),
               _SPDFactor(C2, "total pressure")]
    su, sq, sz, sm = system.slices()
    if system.mean is not None:
        w = system.matrix[sm.start, sz].toarray().ravel()
        s = float(w @ factors[2].solve(w))
        blocks.append(sp.csc_matrix([[s]]))
        factors.append(_Scalar(s))
    else:
        factors.append(None)
        blocks.append(sp.csc_matrix((0, 0)))
    return Preconditioner(blocks, factors, (su, sq, sz, sm))


# ----------------------------------------------------------------------
# MINRES


def minres(A, b: np.ndarray, M=None, x0: np.ndarray | None = None, rtol: float = 1e-6,
           maxit: int = 500, callback=None):
    """Preconditioned MINRES for symmetric ``A`` and SPD preconditioner ``M``.

    ``M`` applies the inverse of the preconditioner (a callable or ``None``).
    Convergence is declared when the explicitly computed residual satisfies
    ``||b - A x|| <= rtol ||b||``.  Returns ``(x, SolveReport)``.
    """
    t0 = time.perf_counter()
    matvec = A.__matmul__ if hasattr(A, "__matmul__") else A
    prec = (lambda r: r) if M is None else M
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    r1 = b - matvec(x)
    rnorm = np.linalg.norm(r1)
    history = [rnorm]
    if bnorm == 0.0 or rnorm <= rtol * bnorm:
        return x, SolveReport(0, rnorm / bnorm if bnorm else 0.0, time.perf_counter() - t0, True, history)
    y = prec(r1)
    beta1 = float(r1 @ y)
    if beta1 <= 0:
        raise NotSPD("preconditioner is not positive definite")
    beta1 = np.sqrt(beta1)
    oldb, beta, dbar, epsln, phibar = 0.0, beta1, 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1.copy()
    converged = False
    it = 0
    for it in range(1, maxit + 1):
        v = y / beta
        y = matvec(v)
        if it >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = prec(r2)
        oldb = beta
        bb = float(r2 @ y)
        if bb < 0:
            raise NotSPD("preconditioner is not positive definite")
        beta = np.sqrt(bb)
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).tiny)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        rnorm = np.linalg.norm(b - matvec(x))
        history.append(rnorm)
        if callback is not None:
            callback(x)
        if rnorm <= rtol * bnorm:
            converged = True
            break
        if beta == 0.0:
            break
    return x, SolveReport(it, rnorm / bnorm, time.perf_counter() - t0, converged, history)


def solve_minres(system: BlockSystem, precond: Preconditioner | None = None, rtol: float = 1e-6,
                 maxit: int = 500):
    """Preconditioned MINRES on a system; returns ``(Solution, SolveReport)``."""
    if precond is None:
        precond = build_preconditioner(system)
    x, report = minres(system.matrix, system.rhs, precond.apply, rtol=rtol, maxit=maxit)
    return system.expand(x), report
