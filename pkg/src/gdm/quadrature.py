"""Quadrature rules on the reference triangle and on line segments.

Triangle rules are stored in barycentric coordinates with weights that sum
to one; the caller scales by the element area.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric quadrature rule on a triangle.

    Attributes
    ----------
    points : ndarray, shape (nq, 3)
        Barycentric coordinates of the quadrature points.
    weights : ndarray, shape (nq,)
        Positive weights summing to one.
    degree : int
        Polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def npoints(self) -> int:
        return len(self.weights)


def _perm3(a: float, b: float) -> list[tuple[float, float, float]]:
    # the three distinct permutations of (a, a, b)
    return [(a, a, b), (a, b, a), (b, a, a)]


def _symmetric_rule(orbits, degree) -> QuadratureRule:
    pts, wts = [], []
    for kind, a, w in orbits:
        if kind == "centroid":
            pts.append((1 / 3, 1 / 3, 1 / 3))
            wts.append(w)
        else:
            for pt in _perm3(a, 1.0 - 2.0 * a):
                pts.append(pt)
                wts.append(w)
    return QuadratureRule(np.array(pts), np.array(wts), degree)


@lru_cache(maxsize=None)
def collapsed_gauss(degree: int) -> QuadratureRule:
    """Conical-product Gauss rule of arbitrary degree.

    Maps the unit square onto the triangle with ``x = s``, ``y = t (1 - s)``;
    the Jacobian ``1 - s`` raises the degree in ``s`` by one.
    """
    n = max(1, math.ceil((degree + 2) / 2))
    g, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (g + 1.0)
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    x = S.ravel()
    y = (T * (1.0 - S)).ravel()
    weights = 2.0 * (WS * WT * (1.0 - S)).ravel()
    points = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(points, weights, degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Return a triangle rule exact for polynomials of the given degree.

    Degrees 1, 2, 4 and 5 use the classical symmetric rules (1, 3, 6 and 7
    points); degree 3 falls back to the 6-point rule and higher degrees to
    :func:`collapsed_gauss`.
    """
    if degree < 1:
        raise ValueError("quadrature degree must be >= 1")
    if degree == 1:
        return _symmetric_rule([("centroid", None, 1.0)], 1)
    if degree == 2:
        return _symmetric_rule([("orbit", 1 / 6, 1 / 3)], 2)
    if degree <= 4:
        return _symmetric_rule(
            [
                ("orbit", 0.445948490915965, 0.223381589678011),
                ("orbit", 0.091576213509771, 0.109951743655322),
            ],
            4,
        )
    if degree == 5:
        return _symmetric_rule(
            [
                ("centroid", None, 0.225),
                ("orbit", 0.470142064105115, 0.132394152788506),
                ("orbit", 0.101286507323456, 0.125939180544827),
            ],
            5,
        )
    return collapsed_gauss(degree)


@lru_cache(maxsize=None)
def line_rule(npoints: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points in [0, 1] and weights summing to one."""
    g, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (g + 1.0), 0.5 * w
