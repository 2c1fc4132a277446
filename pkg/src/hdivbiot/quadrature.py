"""Gauss rules on the reference triangle and the unit interval.

The reference triangle has vertices (0, 0), (1, 0), (0, 1) and area 1/2.
Triangle rules are collapsed (Stroud conical) products of Gauss-Jacobi and
Gauss-Legendre rules, so any exactness degree is available.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights of a quadrature rule.

    ``points`` has shape ``(nq, dim)`` in reference coordinates; ``degree``
    is the polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle, exact for polynomials of ``degree``."""
    degree = max(int(degree), 0)
    n = degree // 2 + 1
    # x-direction absorbs the (1 - s) Jacobian factor of the Duffy collapse.
    a, wa = roots_jacobi(n, 1.0, 0.0)
    b, wb = roots_legendre(n)
    s = 0.5 * (a + 1.0)
    t = 0.5 * (b + 1.0)
    S, T = np.meshgrid(s, t, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    x = S.ravel()
    y = (T * (1.0 - S)).ravel()
    w = (WA * WB).ravel() / 8.0
    pts = np.column_stack([x, y])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def interval_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact for polynomials of ``degree``."""
    degree = max(int(degree), 0)
    n = degree // 2 + 1
    x, w = roots_legendre(n)
    pts = (0.5 * (x + 1.0))[:, None]
    w = 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)
