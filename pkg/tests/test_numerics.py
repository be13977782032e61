import numpy as np
import pytest

from xhdg.numerics import (
    ScalarBasis,
    SegmentTraceBasis,
    dim_p,
    l2_project_edge,
    l2_project_element,
    map_segment,
    map_triangle,
    segment_rule,
    triangle_rule,
)

REF = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))


def _tri_moment(a, b):
    # int_T x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    from math import factorial
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def test_reference_examples():
    r = triangle_rule(2)
    assert abs(r.weights.sum() - 0.5) < 1e-15
    assert abs(r.weights @ r.points[:, 0] - 1 / 6) < 1e-15
    s = segment_rule(2)
    assert abs(s.weights @ s.points**2 - 1 / 3) < 1e-15


@pytest.mark.parametrize("deg", range(0, 13))
def test_triangle_exactness(deg):
    r = triangle_rule(deg)
    assert np.all(r.weights > 0)
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            val = r.weights @ (r.points[:, 0] ** a * r.points[:, 1] ** b)
            assert abs(val - _tri_moment(a, b)) < 1e-13


@pytest.mark.parametrize("deg", range(0, 15))
def test_segment_exactness(deg):
    r = segment_rule(deg)
    assert abs(r.weights.sum() - 1) < 1e-14
    for a in range(deg + 1):
        assert abs(r.weights @ r.points**a - 1 / (a + 1)) < 1e-13


@pytest.mark.parametrize("deg", [-1, 41])
def test_unsupported_degree(deg):
    with pytest.raises(ValueError):
        triangle_rule(deg)
    with pytest.raises(ValueError):
        segment_rule(deg)


def test_deterministic_rules():
    assert np.array_equal(triangle_rule(6).points, triangle_rule(6).points)


def test_mapped_rules():
    tri = np.array([[0.2, 0.1], [0.7, 0.3], [0.1, 0.9]])
    pts, w = map_triangle(triangle_rule(4), *tri)
    d1, d2 = tri[1] - tri[0], tri[2] - tri[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    assert abs(w.sum() - area) < 1e-15
    assert np.allclose(w @ pts / area, tri.mean(axis=0))
    p, q = np.array([0.0, 1.0]), np.array([3.0, 5.0])
    pts, w = map_segment(segment_rule(3), p, q)
    assert abs(w.sum() - 5.0) < 1e-14


def test_dims():
    assert [dim_p(k) for k in (-1, 0, 1, 2, 3)] == [0, 1, 3, 6, 10]
    assert ScalarBasis(2, (0, 0), 1).size == 6
    assert SegmentTraceBasis(2, 0, 0.0, 1.0).size == 3


def test_basis_values():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    b = ScalarBasis.for_triangle(1, tri)
    c = tri.mean(axis=0)
    v = b.eval(np.array([c, [0.3, 0.4]]))
    assert np.allclose(v[:, 0], 1.0)
    assert np.allclose(v[0, 1:], 0.0)
    assert abs(b.scale - np.sqrt(2)) < 1e-15


def test_basis_gradient_finite_differences():
    rng = np.random.default_rng(1)
    tri = np.array([[0.1, 0.2], [0.35, 0.25], [0.2, 0.5]])
    b = ScalarBasis.for_triangle(3, tri)
    x = rng.dirichlet(np.ones(3), 10) @ tri
    _, g = b.eval(x, grad=True)
    h = 1e-6 * b.scale
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        fd = (b.eval(x + e) - b.eval(x - e)) / (2 * h)
        rel = np.abs(fd - g[..., d]) / np.maximum(np.abs(g[..., d]), 1 / b.scale)
        assert rel.max() < 1e-7


def test_trace_basis_dominant_axis():
    assert SegmentTraceBasis.for_segment(1, (0, 0), (1, 0.2)).axis == 0
    assert SegmentTraceBasis.for_segment(1, (0, 0), (0.2, 1)).axis == 1
    b = SegmentTraceBasis.for_segment(2, (0, 0), (0.5, 1))
    assert np.allclose(b.eval([[0.25, 0.5]]), [[1, 0, 0]])


@pytest.mark.parametrize("slope", [0.0, 1e-5, 1e-3, 0.5, 1.0, 1e3])
def test_trace_mass_well_conditioned(slope):
    p, q = np.array([0.2, 0.3]), np.array([0.2, 0.3]) + 0.01 * np.array([1, slope]) / np.hypot(1, slope)
    for k in (1, 2):
        b = SegmentTraceBasis.for_segment(k, p, q)
        pts, w = map_segment(segment_rule(2 * k), p, q)
        L = b.eval(pts)
        assert np.linalg.cond(L.T @ (w[:, None] * L)) < 1e6


def test_restricted_element_basis_degenerates():
    p = np.array([0.3, 0.3])
    q = p + 0.01 * np.array([1.0, 5e-5])
    pts, w = map_segment(segment_rule(6), p, q)
    P = ScalarBasis.for_triangle(2, [p, q, p + [0, 0.01]]).eval(pts)
    assert np.linalg.cond(P.T @ (w[:, None] * P)) > 1e10


def test_projection_mean_value():
    tri = np.array(REF)
    pts, w = map_triangle(triangle_rule(4), *tri)
    c = l2_project_element(lambda x: x[:, 0], ScalarBasis.for_triangle(0, tri), pts, w)
    assert abs(c[0] - 1 / 3) < 1e-14


@pytest.mark.parametrize("r", [0, 1, 2, 3])
def test_projection_reproduces_polynomials(r):
    rng = np.random.default_rng(r)
    tri = np.array([[0.1, 0.1], [0.4, 0.2], [0.2, 0.45]])
    basis = ScalarBasis.for_triangle(r, tri)
    coef = rng.normal(size=basis.size)
    pts, w = map_triangle(triangle_rule(2 * r + 2), *tri)
    c = l2_project_element(lambda x: basis.eval(x) @ coef, basis, pts, w)
    assert np.abs(c - coef).max() < 1e-11
    p, q = tri[0], tri[1]
    eb = SegmentTraceBasis.for_segment(r, p, q)
    ecoef = rng.normal(size=(eb.size, 2))
    pts, w = map_segment(segment_rule(2 * r + 2), p, q)
    c = l2_project_edge(lambda x: eb.eval(x) @ ecoef, eb, pts, w)
    assert np.abs(c - ecoef).max() < 1e-11
