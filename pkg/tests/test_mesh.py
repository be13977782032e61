import numpy as np
import pytest

from xhdg.mesh import build_uniform_mesh


@pytest.mark.parametrize("n,tris,verts,edges", [(1, 2, 4, 5), (8, 128, 81, 208)])
def test_counts(n, tris, verts, edges):
    m = build_uniform_mesh(n)
    assert (m.n_elements, len(m.vertices), m.n_edges) == (tris, verts, edges)


@pytest.mark.parametrize("n", [1, 3, 8, 17])
def test_count_formulas(n):
    m = build_uniform_mesh(n)
    assert m.n_elements == 2 * n * n
    assert len(m.vertices) == (n + 1) ** 2
    assert m.n_edges == n * (3 * n + 2)


@pytest.mark.parametrize("bbox", [(0, 0, 1, 1), (-1.0, 0.5, 2.0, 1.25)])
def test_areas_partition_box(bbox):
    m = build_uniform_mesh(7, bbox)
    assert np.all(m.areas() > 0)
    assert abs(m.areas().sum() - (bbox[2] - bbox[0]) * (bbox[3] - bbox[1])) < 1e-12


def test_adjacency_consistent():
    m = build_uniform_mesh(5)
    for e in range(m.n_edges):
        adj = [t for t in m.edge_elements[e] if t >= 0]
        assert len(adj) == (1 if m.boundary[e] else 2)
        for t in adj:
            assert e in m.element_edges[t]
    for t in range(m.n_elements):
        assert len(set(m.element_edges[t])) == 3


def test_local_edge_matches_vertices():
    m = build_uniform_mesh(4)
    for t in range(m.n_elements):
        tri = m.triangles[t]
        for j in range(3):
            assert set(m.edges[m.element_edges[t, j]]) == {tri[j], tri[(j + 1) % 3]}


def test_diagonal_lower_left_to_upper_right():
    m = build_uniform_mesh(1)
    diag = [e for e in range(m.n_edges) if not m.boundary[e]]
    assert len(diag) == 1
    assert {tuple(m.vertices[v]) for v in m.edges[diag[0]]} == {(0.0, 0.0), (1.0, 1.0)}


@pytest.mark.parametrize("n", [2, 8, 33])
def test_max_diameter(n):
    assert abs(build_uniform_mesh(n).h - np.sqrt(2) / n) < 1e-15


def test_deterministic():
    a, b = build_uniform_mesh(6), build_uniform_mesh(6)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.edges, b.edges)


@pytest.mark.parametrize("args", [(0,), (-2,), (3, (0, 0, 0, 1)), (3, (0, 0, 1, -1))])
def test_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_uniform_mesh(*args)


def test_locate():
    m = build_uniform_mesh(4)
    t = m.locate((0.3, 0.1))
    assert len(t) == 1
    assert len(m.locate((0.25, 0.25))) == 6  # interior vertex
