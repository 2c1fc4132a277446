"""Manufactured solutions and the benchmark cases built on them.

A manufactured solution is given by a displacement ``u`` and a fluid
pressure ``p`` as sympy expressions; the total pressure, stress, body
load and fluid source follow from the model equations in each subdomain.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import sympy as sy

from .forms import CG_PRESSURE, ModelParameters
from .mesh import CellTag, GeometrySpec

_x, _y = sy.symbols("x y", real=True)


def _coords(expr):
    """Rebind any symbols named ``x``/``y`` (whatever their assumptions) to ours."""
    expr = sy.sympify(expr)
    return expr.subs({s: {"x": _x, "y": _y}[s.name] for s in expr.free_symbols
                      if s.name in ("x", "y")})


def _lambdify(expr):
    f = sy.lambdify((_x, _y), expr, "numpy")

    def g(X):
        X = np.asarray(X, dtype=float)
        v = f(X[..., 0], X[..., 1])
        return np.broadcast_to(np.asarray(v, dtype=float), X.shape[:-1]).copy()
    return g


def _stack(funcs):
    def g(X):
        return np.stack([f(X) for f in funcs], axis=-1)
    return g


def _stack2(funcs):
    def g(X):
        return np.stack([np.stack([f(X) for f in row], axis=-1) for row in funcs], axis=-2)
    return g


class ExactSolution:
    """Vectorised callables for a manufactured solution.

    Points are arrays ``(..., 2)``; ``tag`` arrays (broadcast to the point
    shape) select the subdomain for the discontinuous quantities.

    Parameters
    ----------
    u : pair of sympy expressions in ``x, y``
    p : sympy expression
    params : ModelParameters
    """

    def __init__(self, u, p, params: ModelParameters):
        self.params = params
        u = [_coords(c) for c in u]
        p = _coords(p)
        X = (_x, _y)
        gu = [[sy.diff(u[i], X[a]) for a in range(2)] for i in range(2)]
        gp = [sy.diff(p, X[a]) for a in range(2)]
        div = gu[0][0] + gu[1][1]
        self.u = _stack([_lambdify(c) for c in u])
        self.grad_u = _stack2([[_lambdify(c) for c in row] for row in gu])
        self.p = _lambdify(p)
        self.grad_p = _stack([_lambdify(c) for c in gp])
        self.hess_p = _stack2([[_lambdify(sy.diff(gp[a], X[b])) for b in range(2)] for a in range(2)])
        self.div_u = _lambdify(div)
        self._phi, self._sigma, self._body = {}, {}, {}
        for tag in (CellTag.E, CellTag.P):
            mu = params.mu_E if tag == CellTag.E else params.mu_P
            lam = params.lambda_E if tag == CellTag.E else params.lambda_P
            phi = -lam * div + (params.alpha * p if tag == CellTag.P else 0)
            sig = [[mu * (gu[i][a] + gu[a][i]) - (phi if i == a else 0) for a in range(2)]
                   for i in range(2)]
            body = [-(sy.diff(sig[i][0], _x) + sy.diff(sig[i][1], _y)) for i in range(2)]
            self._phi[tag] = _lambdify(phi)
            self._sigma[tag] = _stack2([[_lambdify(c) for c in row] for row in sig])
            self._body[tag] = _stack([_lambdify(c) for c in body])
            if tag == CellTag.P:
                phiP = phi
        lp = params.lambda_P
        dt = params.dt
        src = ((params.c0 + params.alpha ** 2 / lp) * p - params.alpha / lp * phiP) / dt \
            - params.kappa / params.eta * (sy.diff(p, _x, 2) + sy.diff(p, _y, 2))
        self.source = _lambdify(src)

    def _by_tag(self, table, X, tag):
        X = np.asarray(X, dtype=float)
        tag = np.broadcast_to(np.asarray(tag), X.shape[:-1])
        out = table[CellTag.P](X)
        isE = tag == CellTag.E
        if np.any(isE):
            out[isE] = table[CellTag.E](X[isE])
        return out

    def phi(self, X, tag):
        return self._by_tag(self._phi, X, tag)

    def sigma(self, X, tag):
        return self._by_tag(self._sigma, X, tag)

    def body(self, X, tag):
        return self._by_tag(self._body, X, tag)


@dataclass
class Case:
    """A geometry, parameters and data for one problem.

    ``body(X, tag)`` and ``source(X)`` default to the manufactured data of
    ``exact``.  ``interface_correction`` adds the interface traction jump of
    the exact solution to the load.
    """

    name: str
    geometry: GeometrySpec
    params: ModelParameters
    exact: ExactSolution | None = None
    interface_correction: bool = True
    mean_constraint: bool = False
    formulation: str = CG_PRESSURE
    k: int = 0
    options: dict = field(default_factory=dict)
    _body: object = None
    _source: object = None

    def body(self, X, tag):
        if self._body is not None:
            return self._body(X, tag)
        if self.exact is not None:
            return self.exact.body(X, tag)
        return np.zeros(np.shape(X))

    def source(self, X):
        if self._source is not None:
            return self._source(X)
        if self.exact is not None:
            return self.exact.source(X)
        return np.zeros(np.shape(X)[:-1])

    def with_params(self, params: ModelParameters) -> "Case":
        """Same solution with new coefficients (the data are regenerated)."""
        exact = None
        if self.exact is not None:
            exact = ExactSolution(self._u_expr, self._p_expr, params)
        c = replace(self, params=params, exact=exact)
        c._u_expr, c._p_expr = self._u_expr, self._p_expr
        return c


def manufactured_case(name, geometry, params, u, p, **kw) -> Case:
    case = Case(name, geometry, params, ExactSolution(u, p, params), **kw)
    case._u_expr, case._p_expr = u, p
    return case


SQUARE_U = (sy.sin(sy.pi * (_x + _y)), sy.cos(sy.pi * (_x ** 2 + _y ** 2)))
SQUARE_P = sy.sin(sy.pi * _x + _y) * sy.sin(sy.pi * _y)

SQUARE_PARAMS = ModelParameters(mu_E=20.0, mu_P=10.0, lambda_E=1e4, lambda_P=2e4, alpha=1.0,
                                c0=1.0, kappa=1.0, eta=1.0)


def square_case(k: int = 0, formulation: str = CG_PRESSURE, params: ModelParameters | None = None,
                mean_constraint: bool = True) -> Case:
    """Unit square split at ``y = 0.5`` (elastic on top) with a smooth solution.

    The whole boundary is displacement-Dirichlet, so the total pressure
    carries a zero-mean constraint by default.
    """
    params = params if params is not None else SQUARE_PARAMS
    return manufactured_case("square", GeometrySpec("UNIT_SQUARE_SPLIT", {"split": 0.5}),
                             params, SQUARE_U, SQUARE_P, mean_constraint=mean_constraint,
                             formulation=formulation, k=k)


def lshape_params(contrast: str = "mild") -> ModelParameters:
    """Coefficients of the L-shaped test with ``mild`` or ``high`` contrast."""
    if contrast == "mild":
        E_E, nu_E, E_P, nu_P = 10.0, 0.495, 100.0, 0.4
    elif contrast == "high":
        E_E, nu_E, E_P, nu_P = 1000.0, 0.499, 10.0, 0.25
    else:
        raise ValueError(f"unknown contrast {contrast!r}")
    return ModelParameters.from_young(E_E, nu_E, E_P, nu_P, alpha=0.5, c0=0.01, kappa=1e-3,
                                      eta=0.01, beta_u=500.0)


def lshape_case(contrast: str = "mild", k: int = 1, formulation: str = CG_PRESSURE,
                centre=(0.01, 0.01), params: ModelParameters | None = None) -> Case:
    """L-shaped domain with a solution that is steep near the re-entrant corner."""
    params = params if params is not None else lshape_params(contrast)
    r2 = (_x - centre[0]) ** 2 + (_y - centre[1]) ** 2
    s = r2 ** sy.Rational(-2, 3)
    return manufactured_case("lshape", GeometrySpec("L_SHAPE_ZIGZAG"), params,
                             (1e-2 * s, 1e-2 * s), s, formulation=formulation, k=k)


def stripe_params(kappa: float = 1e-16, lam: float | None = None) -> ModelParameters:
    """Coefficients of the thin-stripe preconditioner test.

    ``lam`` overrides both Lame parameters ``lambda_E`` and ``lambda_P``.
    """
    lE, lP = (1e9, 1e6) if lam is None else (lam, lam)
    return ModelParameters(mu_E=1e6, mu_P=1e3, lambda_E=lE, lambda_P=lP, alpha=1.0, c0=1e-6,
                           kappa=kappa, eta=1e-3, beta_u=10.0, beta_p=10.0)


def stripe_case(k: int = 0, formulation: str = CG_PRESSURE, h_ref: float = 0.05,
                params: ModelParameters | None = None) -> Case:
    """Thin poroelastic stripe over an elastic block with the smooth square solution."""
    params = params if params is not None else stripe_params()
    geo = GeometrySpec("RECTANGLE_STRIPE", {"h_ref": h_ref})
    return manufactured_case("stripe", geo, params, SQUARE_U, SQUARE_P,
                             formulation=formulation, k=k)


def zero_case(geometry: GeometrySpec, params: ModelParameters, **kw) -> Case:
    """Homogeneous data: the discrete solution must vanish."""
    return manufactured_case("zero", geometry, params, (sy.Integer(0), sy.Integer(0)),
                             sy.Integer(0), **kw)
