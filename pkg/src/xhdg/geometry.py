"""Interfaces and unfitted boundaries: classification and cut-cell geometry.

Sign convention: the region with phi > 0 is side 1, phi < 0 is side 2.
Normals returned by the geometry point from side 1 into side 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .numerics import map_segment, map_triangle, segment_rule, triangle_rule

log = logging.getLogger(__name__)

ZERO_TOL = 1e-12

INTERIOR_1 = 1
INTERIOR_2 = 2
CUT = 3
ON_INTERFACE = 0


class GeometryResolutionError(ValueError):
    """The mesh does not resolve the geometry (a cut violates the one-crossing rule)."""

    def __init__(self, message, element=None):
        super().__init__(message if element is None else f"element {element}: {message}")
        self.element = element


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segment_params(p, q, a, b, tol=1e-12):
    """Parameter t on p->q of the intersection with segment a->b, or None."""
    d = q - p
    e = b - a
    den = _cross(d, e)
    scale = np.linalg.norm(d) * np.linalg.norm(e)
    if abs(den) <= 1e-14 * scale:
        return None
    w = a - p
    t = _cross(w, e) / den
    s = _cross(w, d) / den
    if -tol <= t <= 1 + tol and -tol <= s <= 1 + tol:
        return float(min(max(t, 0.0), 1.0))
    return None


# ----------------------------------------------------------------------------
# interface pieces and curved patches


@dataclass(frozen=True)
class Segment:
    """Straight interface piece p -> q with a constant side-1 -> side-2 normal."""

    p: np.ndarray
    q: np.ndarray
    n: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.q - self.p))

    @property
    def endpoints(self):
        return self.p, self.q

    def rule(self, degree: int):
        pts, wts = map_segment(segment_rule(degree), self.p, self.q)
        return pts, wts, np.tile(self.n, (len(pts), 1))


@dataclass(frozen=True)
class Arc:
    """Circular interface piece from angle theta0 to theta1 (exact geometry)."""

    center: np.ndarray
    radius: float
    theta0: float
    theta1: float

    @property
    def length(self) -> float:
        return self.radius * abs(self.theta1 - self.theta0)

    def point(self, theta):
        theta = np.asarray(theta, float)
        return self.center + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    @property
    def endpoints(self):
        return self.point(self.theta0), self.point(self.theta1)

    def rule(self, degree: int):
        r = segment_rule(degree + 8)
        theta = self.theta0 + r.points * (self.theta1 - self.theta0)
        pts = self.point(theta)
        wts = r.weights * self.length
        normals = -np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return pts, wts, normals


@dataclass(frozen=True)
class Lens:
    """Region between the chord of an arc and the arc itself.

    Parameterised by (s, t): the arc point g(s) and its foot on the chord
    line are joined by a straight segment, t running from foot to arc.
    """

    arc: Arc

    def rule(self, degree: int):
        arc = self.arc
        P, Q = arc.endpoints
        e = (Q - P) / np.linalg.norm(Q - P)
        rs = segment_rule(degree + 8)
        rt = segment_rule(degree + 1)
        dth = arc.theta1 - arc.theta0
        theta = arc.theta0 + rs.points * dth
        g = arc.point(theta)
        dg = arc.radius * dth * np.stack([-np.sin(theta), np.cos(theta)], axis=1)
        foot = P + ((g - P) @ e)[:, None] * e
        dfoot = (dg @ e)[:, None] * e
        T = rt.points[None, :, None]
        pts = foot[:, None, :] + T * (g - foot)[:, None, :]
        ds = dfoot[:, None, :] + T * (dg - dfoot)[:, None, :]
        dt = np.broadcast_to((g - foot)[:, None, :], ds.shape)
        jac = np.abs(_cross(ds, dt))
        wts = jac * rs.weights[:, None] * rt.weights[None, :]
        return pts.reshape(-1, 2), wts.ravel()

    @property
    def area(self) -> float:
        d = abs(self.arc.theta1 - self.arc.theta0)
        return 0.5 * self.arc.radius**2 * (d - np.sin(d))


def polygon_rule(poly, degree: int, apex=None):
    """Quadrature on a convex polygon by fan triangulation.

    If ``apex`` lies in the closed polygon, the fan is rooted there and each
    sub-triangle collapses onto it (integrable 1/sqrt(r) singularities).
    """
    poly = np.asarray(poly, float)
    rule = triangle_rule(degree)
    pts, wts = [], []
    m = len(poly)
    scale = max(np.ptp(poly[:, 0]), np.ptp(poly[:, 1]), 1e-300)
    if apex is not None and _point_in_convex(poly, apex, 1e-12 * scale):
        apex = np.asarray(apex, float)
        for j in range(m):
            a, b = poly[j], poly[(j + 1) % m]
            if abs(_cross(a - apex, b - apex)) <= 1e-14 * scale**2:
                continue
            p, w = map_triangle(rule, a, apex, b)
            pts.append(p)
            wts.append(w)
    else:
        for j in range(1, m - 1):
            p, w = map_triangle(rule, poly[0], poly[j], poly[j + 1])
            pts.append(p)
            wts.append(w)
    if not pts:
        return np.zeros((0, 2)), np.zeros(0)
    return np.concatenate(pts), np.concatenate(wts)


def _point_in_convex(poly, x, tol) -> bool:
    x = np.asarray(x, float)
    m = len(poly)
    area2 = sum(_cross(poly[j], poly[(j + 1) % m]) for j in range(m))
    sgn = 1.0 if area2 >= 0 else -1.0
    for j in range(m):
        a, b = poly[j], poly[(j + 1) % m]
        if sgn * _cross(b - a, x - a) < -tol * max(np.linalg.norm(b - a), 1e-300):
            return False
    return True


def _dedupe(points, tol):
    out = []
    for p in points:
        if not out or np.linalg.norm(p - out[-1]) > tol:
            out.append(p)
    if len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= tol:
        out.pop()
    return np.array(out)


@dataclass
class SideRegion:
    """K ∩ Ω_i: a straight polygon, plus/minus curved lens patches."""

    polygon: np.ndarray
    lenses: list = field(default_factory=list)  # (sign, Lens)

    def rule(self, degree: int, apex=None):
        pts, wts = polygon_rule(self.polygon, degree, apex)
        for sign, lens in self.lenses:
            p, w = lens.rule(degree)
            pts = np.concatenate([pts, p])
            wts = np.concatenate([wts, sign * w])
        return pts, wts

    def area(self) -> float:
        return float(self.rule(2)[1].sum())

    def bbox_points(self) -> np.ndarray:
        pts = [self.polygon]
        for _, lens in self.lenses:
            pts.append(lens.arc.point(np.linspace(lens.arc.theta0, lens.arc.theta1, 5)))
        return np.concatenate(pts)


@dataclass
class CutCell:
    """Geometry of one cut element.

    ``edge_portions[i]`` lists ``(local edge, a, b)`` sub-segments of the
    element boundary lying in the closure of side i.
    """

    vertices: np.ndarray
    sides: dict
    gamma: object
    edge_portions: dict
    element: int = -1

    @property
    def diameter(self) -> float:
        v = self.vertices
        return max(np.linalg.norm(v[(j + 1) % 3] - v[j]) for j in range(3))


# ----------------------------------------------------------------------------
# geometry descriptors


class Circle:
    """Circle interface; side 2 is the open disk."""

    kind = "circle"
    sign_based = True

    def __init__(self, center, radius):
        if not radius > 0:
            raise ValueError(f"circle radius must be positive, got {radius}")
        self.center = np.asarray(center, float)
        self.radius = float(radius)

    def __repr__(self):
        return f"Circle(center={tuple(self.center)}, radius={self.radius})"

    def phi(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        return np.linalg.norm(pts - self.center, axis=1) - self.radius

    def normal(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        d = self.center - pts
        return d / np.linalg.norm(d, axis=1)[:, None]

    def edge_params(self, p, q):
        """All t in [0, 1] with |p + t(q-p) - c| = r, closed form."""
        p = np.asarray(p, float)
        d = np.asarray(q, float) - p
        w = p - self.center
        a = d @ d
        b = 2.0 * (d @ w)
        c = w @ w - self.radius**2
        disc = b * b - 4 * a * c
        if disc < -1e-12 * b * b:
            return []
        if abs(disc) <= 1e-12 * max(b * b, 1e-300):
            t = -b / (2 * a)
            if 0.0 < t < 1.0:
                raise GeometryResolutionError(f"edge tangent to circle at t={t:.6g}")
            return []
        sq = np.sqrt(max(disc, 0.0))
        qq = -0.5 * (b + np.copysign(sq, b))
        roots = sorted({qq / a, c / qq} if qq != 0 else {0.0})
        tol = 1e-12
        return [min(max(t, 0.0), 1.0) for t in roots if -tol <= t <= 1 + tol]

    def piece(self, a, b):
        ta = np.arctan2(a[1] - self.center[1], a[0] - self.center[0])
        tb = np.arctan2(b[1] - self.center[1], b[0] - self.center[0])
        d = (tb - ta + np.pi) % (2 * np.pi) - np.pi
        return Arc(self.center, self.radius, float(ta), float(ta + d))

    def curvature(self) -> float:
        return 1.0 / self.radius


class Polyline:
    """Open chain of straight segments; side 1 lies to its left."""

    kind = "polyline"
    sign_based = True

    def __init__(self, vertices):
        v = np.asarray(vertices, float)
        if v.ndim != 2 or len(v) < 2:
            raise ValueError("polyline needs at least two vertices")
        if np.any(np.linalg.norm(np.diff(v, axis=0), axis=1) <= 0):
            raise ValueError("polyline has a degenerate segment")
        self.vertices = v

    def __repr__(self):
        return f"Polyline({self.vertices.tolist()})"

    def _segments(self):
        return zip(self.vertices[:-1], self.vertices[1:])

    def _nearest(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        best_d = np.full(len(pts), np.inf)
        best_side = np.zeros(len(pts))
        best_beside = np.full(len(pts), -np.inf)
        best_seg = np.zeros(len(pts), dtype=int)
        for i, (a, b) in enumerate(self._segments()):
            e = b - a
            L = np.linalg.norm(e)
            s = np.clip(((pts - a) @ e) / L**2, 0.0, 1.0)
            foot = a + s[:, None] * e
            dist = np.linalg.norm(pts - foot, axis=1)
            side = _cross(np.broadcast_to(e, pts.shape), pts - a) / L
            beside = np.abs(side) - dist
            take = (dist < best_d - 1e-14) | ((np.abs(dist - best_d) <= 1e-14) & (beside > best_beside))
            best_d = np.where(take, dist, best_d)
            best_side = np.where(take, side, best_side)
            best_beside = np.where(take, beside, best_beside)
            best_seg = np.where(take, i, best_seg)
        return best_d, best_side, best_seg

    def phi(self, pts):
        d, side, _ = self._nearest(pts)
        return np.where(side >= 0, d, -d)

    def _seg_normal(self, i):
        e = self.vertices[i + 1] - self.vertices[i]
        return np.array([e[1], -e[0]]) / np.linalg.norm(e)

    def normal(self, pts):
        _, _, seg = self._nearest(pts)
        return np.array([self._seg_normal(i) for i in seg])

    def edge_params(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        ts = []
        for a, b in self._segments():
            t = _segment_params(p, q, a, b)
            if t is not None and all(abs(t - s) > 1e-12 for s in ts):
                ts.append(t)
        return sorted(ts)

    def piece(self, a, b):
        mid = 0.5 * (np.asarray(a) + np.asarray(b))
        return Segment(np.asarray(a, float), np.asarray(b, float), self.normal(mid)[0])

    def interior_vertices(self):
        return self.vertices[1:-1]

    def curvature(self) -> float:
        return 0.0


class Slit(Polyline):
    """A crack segment from ``start`` to ``tip``; side 1 lies to its left."""

    kind = "slit"
    sign_based = False

    def __init__(self, start, tip):
        super().__init__([start, tip])
        self.start = self.vertices[0]
        self.tip = self.vertices[1]

    def __repr__(self):
        return f"Slit(start={tuple(self.start)}, tip={tuple(self.tip)})"

    def phi(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        e = self.tip - self.start
        return _cross(np.broadcast_to(e, pts.shape), pts - self.start) / np.linalg.norm(e)


def intersect_edge(geom, p, q):
    """Intersection point of edge p->q with the geometry, or None.

    Raises GeometryResolutionError on tangency or on a double crossing.
    """
    ts = geom.edge_params(p, q)
    if not ts:
        return None
    if len(ts) > 1:
        raise GeometryResolutionError("edge crosses the geometry more than once")
    p = np.asarray(p, float)
    return p + ts[0] * (np.asarray(q, float) - p)


# ----------------------------------------------------------------------------
# classification


@dataclass
class Classification:
    """Element/edge tags and the edge portions induced by the geometry.

    ``edge_portions[e]`` is a list of ``(t0, t1, side)`` along the global
    edge orientation, with side 0 for an edge lying on the interface.
    ``tip_elements`` holds elements containing a slit tip in their interior.
    """

    element_tag: np.ndarray
    element_side: np.ndarray
    edge_tag: np.ndarray
    edge_portions: list
    tip_elements: set

    @property
    def cut_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_tag == CUT)


def _vertex_signs(phi, tol):
    s = np.sign(phi)
    s[np.abs(phi) < tol] = 0
    return s.astype(int)


def _side(s) -> int:
    return INTERIOR_1 if s > 0 else INTERIOR_2


def classify(mesh, geom) -> Classification:
    """Tag elements (interior_1 / interior_2 / cut) and edges against ``geom``."""
    h = mesh.h
    tol = ZERO_TOL * h
    V = mesh.vertices
    sv = _vertex_signs(geom.phi(V), tol)
    lens = mesh.edge_lengths()

    portions = []
    edge_tag = np.zeros(mesh.n_edges, dtype=int)
    for e, (a, b) in enumerate(mesh.edges):
        p, q = V[a], V[b]
        if geom.sign_based:
            sa, sb = sv[a], sv[b]
            ts = [t for t in geom.edge_params(p, q) if tol / lens[e] < t < 1 - tol / lens[e]]
            if sa * sb < 0:
                if len(ts) != 1:
                    raise GeometryResolutionError(f"edge {e} crossed {len(ts)} times")
                parts = [(0.0, ts[0], _side(sa)), (ts[0], 1.0, _side(sb))]
            elif sa == 0 and sb == 0:
                mid = geom.phi(0.5 * (p + q))[0]
                if abs(mid) >= tol or ts:
                    raise GeometryResolutionError(f"edge {e} has both ends on the interface but is not on it")
                parts = [(0.0, 1.0, ON_INTERFACE)]
            else:
                if ts:
                    raise GeometryResolutionError(f"edge {e} crossed twice between same-signed ends")
                parts = [(0.0, 1.0, _side(sa if sa != 0 else sb))]
        else:
            ts =[t for t in geom.edge_params(p, q) if tol / lens[e] < t < 1 - tol / lens[e]]
            cuts = [0.0] + ts + [1.0]
            parts = []
            for t0, t1 in zip(cuts[:-1], cuts[1:]):
                s = _vertex_signs(geom.phi(p + 0.5 * (t0 + t1) * (q - p)), tol)[0]
                parts.append((t0, t1, ON_INTERFACE if s == 0 else _side(s)))
        parts = [pt for pt in parts if (pt[1] - pt[0]) * lens[e] >= ZERO_TOL * lens[e]]
        portions.append(parts)
        if len(parts) > 1:
            edge_tag[e] = CUT
        else:
            edge_tag[e] = parts[0][2]

    n_el = mesh.n_elements
    tag = np.zeros(n_el, dtype=int)
    side = np.zeros(n_el, dtype=int)
    tips = set()
    for t in range(n_el):
        verts = mesh.triangles[t]
        s = sv[verts]
        if geom.sign_based:
            if (s > 0).any() and (s < 0).any():
                tag[t] = CUT
                side[t] = 0
            else:
                strict = s[s != 0]
                if len(strict) == 0:
                    raise GeometryResolutionError("all vertices on the interface", t)
                tag[t] = side[t] = _side(strict[0])
        else:
            crossings = []
            for e in mesh.element_edges[t]:
                a, b = mesh.edges[e]
                p, q = V[a], V[b]
                for t0, t1, _ in portions[e][1:]:
                    x = p + t0 * (q - p)
                    if all(np.linalg.norm(x - c) > tol for c in crossings):
                        crossings.append(x)
            xs = mesh.element_vertices(t)
            centroid = xs.mean(axis=0)
            if len(crossings) == 2:
                tag[t] = CUT
            elif len(crossings) > 2:
                raise GeometryResolutionError(f"{len(crossings)} slit crossings", t)
            else:
                c = geom.phi(centroid)[0]
                tag[t] = side[t] = INTERIOR_1 if c >= 0 else INTERIOR_2
                if len(crossings) == 1 and _strictly_inside(xs, geom.tip, tol):
                    tips.add(t)
    if geom.sign_based and hasattr(geom, "interior_vertices"):
        for x in geom.interior_vertices():
            for t in mesh.locate(x):
                if tag[t] == CUT and _strictly_inside(mesh.element_vertices(t), x, tol):
                    raise GeometryResolutionError("polyline kink inside a cut element", t)
    if isinstance(geom, Circle) and not (tag == CUT).any():
        inside = mesh.locate(geom.center)
        if inside and geom.radius < h:
            raise GeometryResolutionError("circle lies inside a single element", inside[0])
    return Classification(tag, side, edge_tag, portions, tips)


def _strictly_inside(tri, x, tol) -> bool:
    tri = np.asarray(tri, float)
    x = np.asarray(x, float)
    for j in range(3):
        a, b = tri[j], tri[(j + 1) % 3]
        if _cross(b - a, x - a) <= tol * np.linalg.norm(b - a):
            return False
    return True


# ----------------------------------------------------------------------------
# cut cells


def cut_element(tri, geom, element: int = -1) -> CutCell:
    """Split a cut triangle into its two side regions and interface piece.

    Straight geometries are cut exactly.  For a circle, the side-2 region
    is the chord polygon plus the lens between chord and arc, and side 1 is
    its chord polygon minus that lens, so both integrate on the exact arc.
    """
    tri = np.asarray(tri, float)
    h = max(np.linalg.norm(tri[(j + 1) % 3] - tri[j]) for j in range(3))
    tol = ZERO_TOL * h
    raw = _vertex_signs(geom.phi(tri), tol)
    s = raw.copy()
    if geom.sign_based:
        if not ((s > 0).any() and (s < 0).any()):
            raise GeometryResolutionError("element is not cut", element)
        if (s == 0).any():
            log.warning("element %d: cut through a vertex, snapping it to side 1", element)
            s[s == 0] = 1
    else:
        if (s == 0).any():
            raise GeometryResolutionError("mesh vertex lies on the slit line", element)

    cross_pts = {}
    for j in range(3):
        p, q = tri[j], tri[(j + 1) % 3]
        if geom.sign_based:
            if s[j] * s[(j + 1) % 3] > 0:
                continue
            if raw[j] == 0:
                cross_pts[j] = p.copy()
            elif raw[(j + 1) % 3] == 0:
                cross_pts[j] = q.copy()
            else:
                ts = geom.edge_params(p, q)
                if len(ts) != 1:
                    raise GeometryResolutionError("edge crossing not unique", element)
                cross_pts[j] = p + ts[0] * (q - p)
        else:
            ts = geom.edge_params(p, q)
            if len(ts) > 1:
                raise GeometryResolutionError("edge crosses the slit twice", element)
            if ts:
                cross_pts[j] = p + ts[0] * (q - p)
    pts = list(cross_pts.values())
    if len(pts) == 3:
        # a crossing at a shared corner shows up on two edges
        uniq = _dedupe(pts, tol)
        pts = list(uniq)
    if len(pts) != 2 or np.linalg.norm(pts[0] - pts[1]) <= tol:
        raise GeometryResolutionError(f"expected two interface crossings, found {len(pts)}", element)

    polys = {1: [], 2: []}
    portions = {1: [], 2: []}
    order = []
    for j in range(3):
        p, q = tri[j], tri[(j + 1) % 3]
        sj = _side(s[j])
        polys[sj].append(p)
        if j in cross_pts:
            x = cross_pts[j]
            polys[1].append(x)
            polys[2].append(x)
            order.append(x)
            sq = _side(s[(j + 1) % 3])
            if geom.sign_based:
                portions[sj].append((j, p, x))
                portions[sq].append((j, x, q))
            else:
                portions[_side(geom.phi(0.5 * (p + x))[0])].append((j, p, x))
                portions[_side(geom.phi(0.5 * (x + q))[0])].append((j, x, q))
        else:
            portions[sj].append((j, p, q))
    for i in (1, 2):
        portions[i] = [pt for pt in portions[i] if np.linalg.norm(pt[2] - pt[1]) > tol]

    a, b = order[0], order[-1]
    gamma = geom.piece(a, b)
    sides = {i: SideRegion(_dedupe(polys[i], tol)) for i in (1, 2)}
    if isinstance(gamma, Arc):
        lens = Lens(gamma)
        sides[2].lenses.append((1.0, lens))
        sides[1].lenses.append((-1.0, lens))
    return CutCell(tri, sides, gamma, portions, element)


def cut_cells(mesh, geom, classification) -> dict:
    return {
        int(t): cut_element(mesh.element_vertices(t), geom, int(t))
        for t in classification.cut_elements
    }


def interface_rule(cutcell: CutCell, degree: int):
    """Points, weights and side-1 -> side-2 unit normals on the interface piece."""
    return cutcell.gamma.rule(degree)


def normal_deviation(cutcell: CutCell, degree: int = 8) -> float:
    """max |n(x) - n(y)| over quadrature points of the interface piece."""
    _, _, n = interface_rule(cutcell, degree)
    diff = n[:, None, :] - n[None, :, :]
    return float(np.linalg.norm(diff, axis=2).max())
