"""Degree-of-freedom layout for the unfitted hybridized scheme.

Each element contributes one or two *element sides* (the element itself, or
its two pieces when cut), each carrying a local stress in P_{k-1} and a
displacement in P_k.  The only global unknowns are traces living on *trace blocks*:
edge portions and interface pieces, each with ``2 (k + 1)`` coefficients
(component-major, dominant-coordinate monomials).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CUT, ON_INTERFACE, SideRegion, polygon_rule
from .numerics import (
    ScalarBasis,
    SegmentTraceBasis,
    dim_p,
    map_segment,
    segment_rule,
    solve_mass,
)

BC_INTERIOR = "interior"
BC_DIRICHLET = "dirichlet"
BC_NEUMANN = "neumann"
BC_INTERFACE = "interface"


@dataclass
class TraceBlock:
    """A face carrying trace unknowns.

    ``owner`` is the element side a boundary block belongs to (0 for blocks
    shared by two sides).  ``offset`` is the first global trace index.
    """

    kind: str  # "edge" or "gamma"
    bc: str
    a: np.ndarray
    b: np.ndarray
    basis: SegmentTraceBasis
    piece: object = None
    edge: int = -1
    owner: int = 0
    offset: int = -1

    @property
    def length(self) -> float:
        if self.piece is not None:
            return self.piece.length
        return float(np.linalg.norm(self.b - self.a))

    def rule(self, degree: int):
        """Quadrature points, weights and unit normals.

        Edge normals are the left-hand normal of a -> b; interface normals
        point from side 1 into side 2, or out of ``owner`` for a boundary piece.
        """
        if self.piece is not None:
            pts, wts, nrm = self.piece.rule(degree)
            if self.owner == 2:
                nrm = -nrm
            return pts, wts, nrm
        pts, wts = map_segment(segment_rule(degree), self.a, self.b)
        d = (self.b - self.a) / np.linalg.norm(self.b - self.a)
        return pts, wts, np.tile([d[1], -d[0]], (len(pts), 1))


@dataclass
class FacePiece:
    """One boundary piece of an element side, linked to a trace block."""

    block: int
    a: np.ndarray = None
    b: np.ndarray = None
    normal: np.ndarray = None  # outward, constant on edge portions
    piece: object = None  # interface piece
    sign: float = 1.0  # outward = sign * (side 1 -> side 2 normal)

    def rule(self, degree: int):
        if self.piece is not None:
            pts, wts, nrm = self.piece.rule(degree)
            return pts, wts, self.sign * nrm
        pts, wts = map_segment(segment_rule(degree), self.a, self.b)
        return pts, wts, np.tile(self.normal, (len(pts), 1))


@dataclass
class ElementSide:
    element: int
    side: int
    vertices: np.ndarray
    h: float
    basis: ScalarBasis
    faces: list = field(default_factory=list)
    region: SideRegion | None = None
    apex: np.ndarray | None = None

    @property
    def cut(self) -> bool:
        return self.region is not None

    def rule(self, degree: int, apex=None):
        apex = self.apex if apex is None else apex
        if self.region is not None:
            return self.region.rule(degree, apex)
        return polygon_rule(self.vertices, degree, apex)

    def shape_key(self):
        """Hashable key shared by translated copies of an uncut element side."""
        if self.cut or self.apex is not None:
            return None
        if any(f.piece is not None for f in self.faces) or len(self.faces) != 3:
            return None
        rel = np.round((self.vertices - self.vertices[0]) / self.h, 10)
        return (self.side, round(self.h, 14), tuple(rel.ravel()))


@dataclass
class DofMap:
    degree: int
    sides: list
    blocks: list
    n_free: int
    block_size: int

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_stress_basis(self) -> int:
        return dim_p(self.degree - 1)

    @property
    def n_local_sigma(self) -> int:
        return 3 * dim_p(self.degree - 1)

    @property
    def n_local_u(self) -> int:
        return 2 * dim_p(self.degree)

    def block_dofs(self, b: int) -> np.ndarray:
        """Global trace indices of block b (full numbering, free first)."""
        return self.blocks[b].offset + np.arange(self.block_size)

    @property
    def n_total(self) -> int:
        return self.n_blocks * self.block_size

    def blocks_with(self, bc: str) -> list[int]:
        return [i for i, blk in enumerate(self.blocks) if blk.bc == bc]


def _outward(tri, j):
    p, q = tri[j], tri[(j + 1) % 3]
    d = (q - p) / np.linalg.norm(q - p)
    return np.array([d[1], -d[0]])


def build_dofmap(
    mesh,
    geom,
    classification,
    cells: dict,
    degree: int,
    scheme: str = "interface",
    active=(1, 2),
    gamma_bc: str = BC_INTERFACE,
    box_bc: str = BC_DIRICHLET,
    apex=None,
) -> DofMap:
    """Lay out element sides and trace blocks.

    ``scheme="interface"`` couples both sides across the interface through a
    single shared trace; ``scheme="boundary"`` treats the interface as the
    boundary of the ``active`` sides with condition ``gamma_bc``.
    """
    if degree < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {degree}")
    if scheme not in ("interface", "boundary"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "interface":
        active = (1, 2)
        gamma_bc = BC_INTERFACE
    elif gamma_bc not in (BC_DIRICHLET, BC_NEUMANN):
        raise ValueError(f"unsupported interface boundary condition {gamma_bc!r}")
    active = tuple(active)

    V = mesh.vertices
    diam = mesh.diameters()
    tag = classification.element_tag
    portions = classification.edge_portions
    apex = None if apex is None else np.asarray(apex, float)
    tip_elements = set() if apex is None else set(mesh.locate(apex))

    sides: list[ElementSide] = []
    for t in range(mesh.n_elements):
        tri = V[mesh.triangles[t]]
        on_tip = t in tip_elements
        if tag[t] == CUT:
            cell = cells[t]
            for s in (1, 2):
                if s not in active:
                    continue
                region = cell.sides[s]
                basis = ScalarBasis.for_points(degree, region.bbox_points())
                sides.append(ElementSide(t, s, tri, diam[t], basis, region=region,
                                         apex=apex if on_tip else None))
        else:
            s = int(classification.element_side[t])
            if s not in active:
                continue
            sides.append(ElementSide(t, s, tri, diam[t], ScalarBasis.for_triangle(degree, tri),
                                     apex=apex if on_tip else None))

    blocks: list[TraceBlock] = []
    users: list[list[int]] = []
    portion_block: dict = {}

    def new_block(blk):
        blocks.append(blk)
        users.append([])
        return len(blocks) - 1

    for si, es in enumerate(sides):
        t = es.element
        for j in range(3):
            e = mesh.element_edges[t, j]
            a, b = mesh.edges[e]
            p, q = V[a], V[b]
            for pi, (t0, t1, ps) in enumerate(portions[e]):
                if es.cut and ps != es.side:
                    continue
                key = (e, pi)
                if key not in portion_block:
                    x0, x1 = p + t0 * (q - p), p + t1 * (q - p)
                    if ps == ON_INTERFACE:
                        bc = gamma_bc
                    elif mesh.boundary[e]:
                        bc = box_bc
                    else:
                        bc = BC_INTERIOR
                    portion_block[key] = new_block(TraceBlock(
                        "edge", bc, x0, x1, SegmentTraceBasis.for_segment(degree, x0, x1), edge=e))
                bi = portion_block[key]
                blk = blocks[bi]
                users[bi].append(si)
                if blk.bc != BC_INTERIOR and blk.owner == 0:
                    blk.owner = es.side
                es.faces.append(FacePiece(bi, blk.a, blk.b, normal=_outward(es.vertices, j)))

    # interface pieces
    shared: dict = {}
    for si, es in enumerate(sides):
        if not es.cut:
            continue
        cell = cells[es.element]
        gamma = cell.gamma
        sign = 1.0 if es.side == 1 else -1.0
        a, b = gamma.endpoints
        if scheme == "interface":
            if es.element not in shared:
                shared[es.element] = new_block(TraceBlock(
                    "gamma", BC_INTERFACE, a, b, SegmentTraceBasis.for_segment(degree, a, b),
                    piece=gamma))
            bi = shared[es.element]
        else:
            bi = new_block(TraceBlock(
                "gamma", gamma_bc, a, b, SegmentTraceBasis.for_segment(degree, a, b),
                piece=gamma, owner=es.side))
        users[bi].append(si)
        es.faces.append(FacePiece(bi, a, b, piece=gamma, sign=sign))

    for bi, blk in enumerate(blocks):
        if blk.bc == BC_INTERIOR and len(users[bi]) != 2:
            raise ValueError(f"interior edge {blk.edge} is seen by {len(users[bi])} element sides")
        if blk.bc == BC_INTERFACE:
            blk.owner = 0

    if not any(b.bc == BC_DIRICHLET for b in blocks):
        raise ValueError("pure traction problem: no Dirichlet boundary, solution not unique")

    # free blocks first, then constrained
    bs = 2 * (degree + 1)
    order = [i for i, b in enumerate(blocks) if b.bc != BC_DIRICHLET]
    order += [i for i, b in enumerate(blocks) if b.bc == BC_DIRICHLET]
    for pos, i in enumerate(order):
        blocks[i].offset = pos * bs
    n_free = sum(1 for b in blocks if b.bc != BC_DIRICHLET) * bs
    return DofMap(degree, sides, blocks, n_free, bs)


def constrain_dirichlet(dofmap: DofMap, g_D, quad_degree: int | None = None) -> np.ndarray:
    """L2 projections of ``g_D`` on every Dirichlet block, in global ordering.

    Returns the constrained part of the trace vector (length n_total - n_free).
    """
    k = dofmap.degree
    deg = 2 * k + 4 if quad_degree is None else quad_degree
    bs = dofmap.block_size
    out = np.zeros(dofmap.n_total - dofmap.n_free)
    for blk in dofmap.blocks:
        if blk.bc != BC_DIRICHLET:
            continue
        pts, wts, _ = blk.rule(deg)
        L = blk.basis.eval(pts)
        M = L.T @ (wts[:, None] * L)
        g = np.asarray(g_D(pts, blk.owner), float)
        coef = solve_mass(M, L.T @ (wts[:, None] * g))  # (k+1, 2)
        i0 = blk.offset - dofmap.n_free
        out[i0:i0 + bs] = coef.T.ravel()
    return out
