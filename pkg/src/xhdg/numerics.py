"""Quadrature rules, polynomial bases and local L2 projections."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import roots_jacobi

log = logging.getLogger(__name__)

MAX_DEGREE = 40


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


def _check_degree(degree: int) -> int:
    degree = int(degree)
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (0..{MAX_DEGREE})")
    return degree


@functools.lru_cache(maxsize=None)
def segment_rule(degree: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1]."""
    degree = _check_degree(degree)
    x, w = np.polynomial.legendre.leggauss(degree // 2 + 1)
    return QuadRule(0.5 * (x + 1.0), 0.5 * w, degree)


@functools.lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadRule:
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    The collapse point is the vertex (1, 0): the Jacobian factor vanishes
    there, which makes the rule usable for integrands with an inverse square
    root singularity placed at that vertex.
    """
    degree = _check_degree(degree)
    m = degree // 2 + 1
    xa, wa = roots_jacobi(m, 1.0, 0.0)
    a = 0.5 * (xa + 1.0)
    wa = 0.25 * wa
    b, wb = np.polynomial.legendre.leggauss(m)
    b = 0.5 * (b + 1.0)
    wb = 0.5 * wb
    A, B = np.meshgrid(a, b, indexing="ij")
    points = np.column_stack([A.ravel(), (B * (1.0 - A)).ravel()])
    weights = np.outer(wa, wb).ravel()
    return QuadRule(points, weights, degree)


def map_triangle(rule: QuadRule, p0, p1, p2) -> tuple[np.ndarray, np.ndarray]:
    """Push a reference rule onto triangle (p0, p1, p2); p1 is the collapse vertex."""
    p0 = np.asarray(p0, float)
    d1 = np.asarray(p1, float) - p0
    d2 = np.asarray(p2, float) - p0
    jac = abs(d1[0] * d2[1] - d1[1] * d2[0])
    pts = p0 + rule.points[:, :1] * d1 + rule.points[:, 1:] * d2
    return pts, rule.weights * jac


def map_segment(rule: QuadRule, p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    pts = p + rule.points[:, None] * (q - p)
    return pts, rule.weights * np.linalg.norm(q - p)


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def dim_p(degree: int) -> int:
    """dim P_k on a triangle; 0 for negative degree."""
    return 0 if degree < 0 else (degree + 1) * (degree + 2) // 2


@dataclass(frozen=True)
class ScalarBasis:
    """Scaled monomials ((x - cx)/s)^a ((y - cy)/s)^b with a + b <= degree."""

    degree: int
    center: tuple[float, float]
    scale: float

    @property
    def size(self) -> int:
        return dim_p(self.degree)

    def eval(self, points, grad: bool = False):
        pts = np.atleast_2d(np.asarray(points, float))
        X = (pts[:, 0] - self.center[0]) / self.scale
        Y = (pts[:, 1] - self.center[1]) / self.scale
        k = self.degree
        px = np.ones((k + 1, len(pts)))
        py = np.ones((k + 1, len(pts)))
        for j in range(1, k + 1):
            px[j] = px[j - 1] * X
            py[j] = py[j - 1] * Y
        exps = monomial_exponents(k)
        vals = np.stack([px[a] * py[b] for a, b in exps], axis=1)
        if not grad:
            return vals
        g = np.zeros((len(pts), len(exps), 2))
        for m, (a, b) in enumerate(exps):
            if a > 0:
                g[:, m, 0] = a * px[a - 1] * py[b] / self.scale
            if b > 0:
                g[:, m, 1] = b * px[a] * py[b - 1] / self.scale
        return vals, g

    @classmethod
    def for_points(cls, degree: int, points) -> "ScalarBasis":
        """Basis centred and scaled on the bounding box of ``points``."""
        pts = np.asarray(points, float)
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        c = 0.5 * (lo + hi)
        s = float(np.hypot(*(hi - lo)))
        return cls(degree, (float(c[0]), float(c[1])), s)

    @classmethod
    def for_triangle(cls, degree: int, vertices) -> "ScalarBasis":
        v = np.asarray(vertices, float)
        c = v.mean(axis=0)
        d = max(np.linalg.norm(v[(j + 1) % 3] - v[j]) for j in range(3))
        return cls(degree, (float(c[0]), float(c[1])), float(d))


@dataclass(frozen=True)
class SegmentTraceBasis:
    """{1, s, ..., s^k} in the dominant coordinate of a segment.

    ``axis`` is 0 when the segment is closer to horizontal (|dx| >= |dy|),
    otherwise 1; ``s = (x[axis] - center) / scale``.
    """

    degree: int
    axis: int
    center: float
    scale: float

    @property
    def size(self) -> int:
        return self.degree + 1

    def eval(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        s = (pts[:, self.axis] - self.center) / self.scale
        return np.vander(s, self.degree + 1, increasing=True)

    @classmethod
    def for_segment(cls, degree: int, p, q) -> "SegmentTraceBasis":
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        d = np.abs(q - p)
        axis = 0 if d[0] >= d[1] else 1
        return cls(degree, axis, 0.5 * float(p[axis] + q[axis]), float(d[axis]))


def mass_matrix(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return values.T @ (weights[:, None] * values)


def solve_mass(M: np.ndarray, rhs: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Pivoted dense solve of a local mass system; warns on near-singular M."""
    lu, piv = scipy.linalg.lu_factor(M)
    rcond = np.min(np.abs(np.diag(lu))) / max(np.max(np.abs(np.diag(lu))), 1e-300)
    if rcond < 1.0 / cond_limit:
        log.warning("near-singular local mass matrix (pivot ratio %.2e)", rcond)
    return scipy.linalg.lu_solve((lu, piv), rhs)


def l2_project(func, basis, points, weights) -> np.ndarray:
    """Coefficients of the L2 projection of ``func`` onto ``basis`` over a
    region described by the quadrature ``(points, weights)``.

    ``func`` maps an (N, 2) array to (N,) or (N, m); the result has shape
    (basis.size,) or (basis.size, m).
    """
    V = basis.eval(points)
    f = np.asarray(func(points), float)
    rhs = V.T @ (weights[:, None] * f) if f.ndim == 2 else V.T @ (weights * f)
    return solve_mass(mass_matrix(V, weights), rhs)


def l2_project_element(func, basis: ScalarBasis, points, weights) -> np.ndarray:
    """Element (or element side region) projection onto P_r."""
    return l2_project(func, basis, points, weights)


def l2_project_edge(func, basis: SegmentTraceBasis, points, weights) -> np.ndarray:
    """Projection onto P_r of an edge or edge portion."""
    return l2_project(func, basis, points, weights)
