"""Structured triangulations of an axis-aligned box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Uniform triangle mesh with element/edge connectivity.

    Local edge ``j`` of triangle ``t`` joins ``triangles[t, j]`` and
    ``triangles[t, (j + 1) % 3]``.  ``edge_elements[e]`` holds the one or two
    adjacent triangles, padded with -1 on the boundary.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    element_edges: np.ndarray
    boundary: np.ndarray
    n: int
    bbox: tuple[float, float, float, float]

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def element_vertices(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        """Element diameters h_K (longest edge)."""
        p = self.vertices[self.triangles]
        lens = np.stack(
            [np.linalg.norm(p[:, (j + 1) % 3] - p[:, j], axis=1) for j in range(3)],
            axis=1,
        )
        return lens.max(axis=1)

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters().max())

    def locate(self, point, tol: float = 1e-12) -> list[int]:
        """Triangles whose closure contains ``point``."""
        x0, y0, x1, y1 = self.bbox
        hx = (x1 - x0) / self.n
        hy = (y1 - y0) / self.n
        px, py = float(point[0]), float(point[1])
        i0 = int(np.clip(np.floor((px - x0) / hx), 0, self.n - 1))
        j0 = int(np.clip(np.floor((py - y0) / hy), 0, self.n - 1))
        found = []
        for j in range(max(j0 - 1, 0), min(j0 + 2, self.n)):
            for i in range(max(i0 - 1, 0), min(i0 + 2, self.n)):
                for t in (2 * (j * self.n + i), 2 * (j * self.n + i) + 1):
                    if _in_triangle(self.element_vertices(t), (px, py), tol):
                        found.append(t)
        return sorted(found)


def _in_triangle(p: np.ndarray, x, tol: float) -> bool:
    for j in range(3):
        a = p[j]
        b = p[(j + 1) % 3]
        cross = (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])
        if cross < -tol * np.hypot(b[0] - a[0], b[1] - a[1]):
            return False
    return True


def build_uniform_mesh(n: int, bbox=(0.0, 0.0, 1.0, 1.0)) -> Mesh:
    """Split an ``n x n`` grid of ``bbox`` into ``2 n^2`` triangles.

    Every grid square is cut along its lower-left to upper-right diagonal.
    ``bbox`` is ``(xmin, ymin, xmax, ymax)``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    n = int(n)
    x0, y0, x1, y1 = map(float, bbox)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bounding box {bbox!r}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    ii, jj = np.meshgrid(np.arange(n), np.arange(n))
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = vid(ii, jj)
    v10 = vid(ii + 1, jj)
    v11 = vid(ii + 1, jj + 1)
    v01 = vid(ii, jj + 1)
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])

    local = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(local, axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n_tri = len(tris)
    element_edges = inverse.reshape(3, n_tri).T.copy()

    edge_elements = -np.ones((len(edges), 2), dtype=np.int64)
    counts = np.zeros(len(edges), dtype=np.int64)
    for t in range(n_tri):
        for e in element_edges[t]:
            edge_elements[e, counts[e]] = t
            counts[e] += 1
    boundary = counts == 1

    return Mesh(
        vertices=vertices,
        triangles=tris,
        edges=edges,
        edge_elements=edge_elements,
        element_edges=element_edges,
        boundary=boundary,
        n=n,
        bbox=(x0, y0, x1, y1),
    )
