"""Gauss-type quadrature on the reference triangle and the unit interval.

Triangle rules come from a collapsed (Duffy) tensor product: a Gauss-Legendre
rule in the first coordinate times a Gauss-Jacobi rule with weight (1-s) in
the second absorbs the Jacobian of the square-to-triangle map exactly, so an
m x m grid integrates total degree 2m-1 and every weight stays positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20

# Reference triangle: vertices (0,0), (1,0), (0,1), area 1/2.


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights exact for polynomials up to ``exact_degree``."""

    points: np.ndarray   # (n, 2) on the triangle, (n,) on [0, 1]
    weights: np.ndarray  # (n,), all positive
    exact_degree: int


def _gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule mapped from [-1, 1] to [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def triangle_rule(exact_degree: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle.

    Parameters
    ----------
    exact_degree : int
        Largest total polynomial degree integrated exactly, between 1 and
        ``MAX_DEGREE``.
    """
    if not 1 <= exact_degree <= MAX_DEGREE:
        raise ValueError(
            f"triangle rule degree must be in [1, {MAX_DEGREE}], got {exact_degree}"
        )
    m = -(-(exact_degree + 1) // 2)  # ceil
    xi, wx = _gauss_legendre_01(m)
    # Gauss-Jacobi with weight (1-t) on [-1,1]; rescale to weight (1-s) on [0,1].
    tj, wj = roots_jacobi(m, 1.0, 0.0)
    eta = (tj + 1.0) / 2.0
    weta = wj / 4.0
    pts = np.empty((m * m, 2))
    wts = np.empty(m * m)
    for j in range(m):
        for i in range(m):
            q = j * m + i
            pts[q, 0] = xi[i] * (1.0 - eta[j])
            pts[q, 1] = eta[j]
            wts[q] = wx[i] * weta[j]
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, exact_degree)


@lru_cache(maxsize=None)
def edge_rule(exact_degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] for face integrals."""
    if not 1 <= exact_degree <= MAX_DEGREE:
        raise ValueError(
            f"edge rule degree must be in [1, {MAX_DEGREE}], got {exact_degree}"
        )
    m = -(-(exact_degree + 1) // 2)
    x, w = _gauss_legendre_01(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w, exact_degree)
