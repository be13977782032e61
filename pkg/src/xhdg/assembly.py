"""Local element-side matrices, static condensation and global trace assembly.

Unknowns on an element side are ordered ``x = (sigma, u)`` with the stress
in the symmetric basis E1 = e1 e1^T, E2 = e1 e2^T + e2 e1^T, E3 = e2 e2^T and
both fields component-major.  The local equations read

    K x + B lam = F,        B^T x + C lam = g

with K = [[-A, -D], [-D^T, S]], B = [[E], [-G]] and F = (0, -(f, v)); the
condensed trace operator C - B^T K^{-1} B is symmetric positive definite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .numerics import dim_p
from .spaces import BC_INTERFACE, BC_NEUMANN, DofMap

log = logging.getLogger(__name__)

# lambda / mu above which the local condensation runs in extended precision
EXTENDED_RATIO = 1e6

_E = np.array([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]])


@dataclass(frozen=True)
class Material:
    """Isotropic material given by its Lame parameters."""

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got {self.mu}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @classmethod
    def plane_strain(cls, E: float, nu: float) -> "Material":
        if not (E > 0 and -1.0 < nu < 0.5):
            raise ValueError(f"invalid plane strain parameters E={E}, nu={nu}")
        return cls(E / (2 * (1 + nu)), E * nu / ((1 + nu) * (1 - 2 * nu)))

    @classmethod
    def plane_stress(cls, E: float, nu: float) -> "Material":
        if not (E > 0 and -1.0 < nu < 1.0):
            raise ValueError(f"invalid plane stress parameters E={E}, nu={nu}")
        return cls(E / (2 * (1 + nu)), E * nu / ((1 + nu) * (1 - nu)))

    def stress(self, eps):
        """Hooke's law on (..., 2, 2) strains."""
        eps = np.asarray(eps, float)
        tr = eps[..., 0, 0] + eps[..., 1, 1]
        return 2 * self.mu * eps + self.lam * tr[..., None, None] * np.eye(2)

    def compliance_matrix(self) -> np.ndarray:
        """(A E_c) : E_d for the symmetric basis E1, E2, E3."""
        return np.einsum("cij,dij->cd", apply_compliance(self, _E), _E)


def apply_compliance(mat: Material, sigma):
    """A sigma = (sigma - lam / (2 mu + 2 lam) tr(sigma) I) / (2 mu).

    Evaluated as deviatoric plus volumetric parts, which avoids the
    cancellation in 1 - 2 lam / (2 mu + 2 lam) for nearly incompressible
    materials.
    """
    sigma = np.asarray(sigma, float)
    half_tr = 0.5 * (sigma[..., 0, 0] + sigma[..., 1, 1])[..., None, None] * np.eye(2)
    return (sigma - half_tr) / (2 * mat.mu) + half_tr / (2 * (mat.mu + mat.lam))


def stabilization_values(mat: Material, h: float) -> float:
    """tau = 2 mu / h_K on every face of the element side."""
    return 2.0 * mat.mu / h


# ----------------------------------------------------------------------------
# local blocks


@dataclass
class LocalBlocks:
    A: np.ndarray
    D: np.ndarray
    S: np.ndarray
    E: list
    G: list
    C: list

    @property
    def K(self) -> np.ndarray:
        return np.block([[-self.A, -self.D], [-self.D.T, self.S]])

    @property
    def B(self) -> np.ndarray:
        return np.hstack([np.vstack([e, -g]) for e, g in zip(self.E, self.G)])

    @property
    def Cmat(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.C)


def _sym_grad_basis(dphi):
    """E_c grad(phi): (N, 3, nP, 2) for c = 1, 2, 3."""
    N, nP, _ = dphi.shape
    out = np.zeros((N, 3, nP, 2))
    out[:, 0, :, 0] = dphi[..., 0]
    out[:, 1, :, 0] = dphi[..., 1]
    out[:, 1, :, 1] = dphi[..., 0]
    out[:, 2, :, 1] = dphi[..., 1]
    return out


def assemble_local(side, dofmap: DofMap, mat: Material, quad_degree: int) -> LocalBlocks:
    """All local matrices of one element side.

    The stress uses the leading dim P_{k-1} functions of the side basis, the
    displacement all dim P_k of them.
    """
    k = dofmap.degree
    nP = dim_p(k)
    nS = dim_p(k - 1)
    tau = stabilization_values(mat, side.h)
    pts, wts = side.rule(quad_degree)
    phi, dphi = side.basis.eval(pts, grad=True)
    phiS = phi[:, :nS]
    A = np.kron(mat.compliance_matrix(), phiS.T @ (wts[:, None] * phiS))
    eg = _sym_grad_basis(dphi[:, :nS])
    D = np.einsum("n,ncad,nb->cadb", wts, eg, phi).reshape(3 * nS, 2 * nP)

    S = np.zeros((2 * nP, 2 * nP))
    Es, Gs, Cs = [], [], []
    I2 = np.eye(2)
    for face in side.faces:
        fp, fw, fn = face.rule(quad_degree)
        L = dofmap.blocks[face.block].basis.eval(fp)
        ph = side.basis.eval(fp)
        En = np.einsum("cij,nj->nci", _E, fn)  # E_c n
        Es.append(np.einsum("n,na,ncd,nj->cadj", fw, ph[:, :nS], En, L).reshape(3 * nS, 2 * (k + 1)))
        Gs.append(tau * np.kron(I2, ph.T @ (fw[:, None] * L)))
        Cs.append(tau * np.kron(I2, L.T @ (fw[:, None] * L)))
        S += tau * np.kron(I2, ph.T @ (fw[:, None] * ph))
    return LocalBlocks(A, D, S, Es, Gs, Cs)


@dataclass
class Condensed:
    """Condensed operator of an element side (or a group of congruent ones).

    ``KinvB`` and ``KinvU`` give the local solution x = -KinvU b - KinvB lam
    for body load moments b = (f, v).
    """

    M: np.ndarray
    R: np.ndarray
    KinvB: np.ndarray
    KinvU: np.ndarray
    points: np.ndarray  # load quadrature points of the reference side
    weights: np.ndarray
    phi: np.ndarray


def _lu_solve_extended(K: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve K X = B by partially pivoted elimination in extended precision."""
    A = np.array(K, dtype=np.longdouble)
    X = np.array(B, dtype=np.longdouble)
    n = len(A)
    for j in range(n):
        p = j + int(np.argmax(np.abs(A[j:, j])))
        if A[p, j] == 0:
            raise np.linalg.LinAlgError("singular local matrix")
        if p != j:
            A[[j, p]] = A[[p, j]]
            X[[j, p]] = X[[p, j]]
        f = A[j + 1:, j] / A[j, j]
        A[j + 1:, j:] -= np.outer(f, A[j, j:])
        X[j + 1:] -= np.outer(f, X[j])
    for j in range(n - 1, -1, -1):
        X[j] = (X[j] - A[j, j + 1:] @ X[j + 1:]) / A[j, j]
    return X


def condense(blocks: LocalBlocks, n_sigma: int, extended: bool = False):
    """Return (M_loc, R, KinvB, KinvU) for the local system.

    M_loc = C - B^T K^{-1} B, and the condensed right-hand side for body
    moments b is R b with R = B^T K^{-1}[:, u].  With ``extended`` the
    elimination runs in long double: for nearly incompressible materials
    C - B^T K^{-1} B cancels terms of size lambda / mu.
    """
    K = blocks.K
    B = blocks.B
    n = K.shape[0]
    sel = np.zeros((n, n - n_sigma))
    sel[n_sigma:] = np.eye(n - n_sigma)
    if extended:
        sol = _lu_solve_extended(K, np.hstack([B, sel]))
        KinvB, KinvU = sol[:, : B.shape[1]], sol[:, B.shape[1]:]
        Bx = B.astype(np.longdouble)
        M = blocks.Cmat.astype(np.longdouble) - Bx.T @ KinvB
    else:
        lu = scipy.linalg.lu_factor(K)
        KinvB = scipy.linalg.lu_solve(lu, B)
        KinvU = scipy.linalg.lu_solve(lu, sel)
        Bx = B
        M = blocks.Cmat - B.T @ KinvB
    M = 0.5 * (M + M.T)
    R = Bx.T @ KinvU
    return M, R, KinvB, KinvU


@dataclass
class SideGroup:
    """Element sides sharing one condensed operator (translates of each other)."""

    sides: np.ndarray  # indices into dofmap.sides
    shifts: np.ndarray  # (n, 2) translation from the reference side
    dofs: np.ndarray  # (n, n_trace_local) global trace indices
    op: Condensed
    material_side: int


@dataclass
class TraceSystem:
    """Global condensed system over all trace dofs (free first)."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    groups: list
    body: list  # per group, (n, 2 nP) body moments
    extended: bool = False

    @property
    def n_free(self) -> int:
        return self.dofmap.n_free

    def reduced(self, lam_c: np.ndarray):
        """Free block of the matrix and right-hand side with Dirichlet data eliminated."""
        nf = self.n_free
        M = self.matrix
        Mff = M[:nf, :nf].tocsr()
        Mfc = M[:nf, nf:]
        return Mff, self.rhs[:nf] - Mfc @ lam_c


def check_quadrature(dofmap: DofMap, quad_degree: int, tol: float = 1e-9) -> None:
    """Compare a moment of the first cut side at two quadrature orders."""
    cut = [s for s in dofmap.sides if s.cut]
    if not cut:
        return
    s = cut[0]
    deg = 2 * dofmap.degree + 2
    b = s.basis
    for q in (quad_degree, quad_degree + 10):
        pts, wts = s.rule(q)
        X = (pts - np.asarray(b.center)) / b.scale
        val = float(np.sum(wts * X[:, 0] ** (deg - 1) * X[:, 1]))
        if q == quad_degree:
            ref = val
    scale = float(np.sum(np.abs(s.rule(quad_degree)[1])))
    if abs(val - ref) > tol * max(scale, 1e-300):
        raise RuntimeError(
            f"cut-cell quadrature not converged on element {s.element}: |diff| = {abs(val - ref):.3e}"
        )


def _build_group(dofmap, sides_idx, materials, quad_degree, extended=False):
    ref = dofmap.sides[sides_idx[0]]
    mat = materials[ref.side]
    blocks = assemble_local(ref, dofmap, mat, quad_degree)
    M, R, KinvB, KinvU = condense(blocks, dofmap.n_local_sigma, extended)
    pts, wts = ref.rule(quad_degree)
    phi = ref.basis.eval(pts)
    op = Condensed(M, R, KinvB, KinvU, pts, wts, phi)
    v0 = ref.vertices[0]
    shifts = np.array([dofmap.sides[i].vertices[0] - v0 for i in sides_idx])
    dofs = np.array([
        np.concatenate([dofmap.block_dofs(f.block) for f in dofmap.sides[i].faces])
        for i in sides_idx
    ])
    return SideGroup(np.asarray(sides_idx), shifts, dofs, op, ref.side)


def body_moments(group: SideGroup, f) -> np.ndarray:
    """(f, v) for every side of the group, shape (n, 2 nP), component-major."""
    op = group.op
    pts = op.points[None, :, :] + group.shifts[:, None, :]
    fv = np.asarray(f(pts.reshape(-1, 2), group.material_side), float)
    fv = fv.reshape(len(group.sides), len(op.weights), 2)
    b = np.einsum("n,na,gnd->gda", op.weights, op.phi, fv)
    return b.reshape(len(group.sides), -1)


def assemble_global(
    dofmap: DofMap,
    materials: dict,
    f,
    g_neumann=None,
    g_jump=None,
    quad_degree: int | None = None,
    use_cache: bool = True,
    self_check: bool = True,
    precision: str = "auto",
) -> TraceSystem:
    """Assemble the condensed trace system.

    ``materials`` maps side label (1, 2) to a Material.  ``f(x, side)`` is the
    body force; ``g_neumann(x, n, side)`` the prescribed traction on Neumann
    faces (n outward); ``g_jump(x, n)`` the traction jump across the interface
    with n pointing from side 1 into side 2.

    ``precision`` is "double", "extended" or "auto"; auto switches to long
    double condensation once lambda / mu exceeds EXTENDED_RATIO.
    """
    if precision not in ("auto", "double", "extended"):
        raise ValueError(f"unknown precision {precision!r}")
    extended = precision == "extended" or (
        precision == "auto"
        and max(m.lam / m.mu for m in materials.values()) > EXTENDED_RATIO
    )
    k = dofmap.degree
    qd = 2 * k + 2 if quad_degree is None else quad_degree
    if self_check:
        check_quadrature(dofmap, qd)

    # group congruent uncut sides
    buckets: dict = {}
    singles = []
    for i, s in enumerate(dofmap.sides):
        key = s.shape_key() if use_cache else None
        if key is None:
            singles.append([i])
        else:
            buckets.setdefault(key, []).append(i)
    groups = [
        _build_group(dofmap, idx, materials, qd, extended)
        for idx in list(buckets.values()) + singles
    ]

    n = dofmap.n_total
    dtype = np.longdouble if extended else float
    rows, cols, vals = [], [], []
    rhs = np.zeros(n, dtype)
    body = []
    for g in groups:
        m = g.dofs.shape[1]
        rows.append(np.repeat(g.dofs, m, axis=1).ravel())
        cols.append(np.tile(g.dofs, (1, m)).ravel())
        vals.append(np.broadcast_to(g.op.M.ravel(), (len(g.sides), m * m)).ravel())
        b = body_moments(g, f)
        body.append(b)
        np.add.at(rhs, g.dofs.ravel(), (b @ g.op.R.T).ravel())
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()

    # traction loads on Neumann faces and the interface
    for s in dofmap.sides:
        for face in s.faces:
            blk = dofmap.blocks[face.block]
            if blk.bc == BC_NEUMANN and g_neumann is not None:
                load = lambda x, nn, side=s.side: g_neumann(x, nn, side)  # noqa: E731
            elif blk.bc == BC_INTERFACE and s.side == 1 and g_jump is not None:
                load = g_jump
            else:
                continue
            pts, wts, nrm = face.rule(qd)
            L = blk.basis.eval(pts)
            g = np.asarray(load(pts, nrm), float)
            rhs[dofmap.block_dofs(face.block)] += (L.T @ (wts[:, None] * g)).T.ravel()

    log.debug("assembled %d trace dofs (%d free) from %d groups", n, dofmap.n_free, len(groups))
    return TraceSystem(matrix, rhs, dofmap, groups, body, extended)


def recover_local(system: TraceSystem, lam: np.ndarray):
    """Local (sigma, u) coefficients for every element side.

    Returns arrays of shape (n_sides, 3, dim P_{k-1}) and (n_sides, 2, dim P_k).
    """
    dm = system.dofmap
    nP = dim_p(dm.degree)
    nS = dim_p(dm.degree - 1)
    ns = len(dm.sides)
    sig = np.zeros((ns, 3, nS))
    u = np.zeros((ns, 2, nP))
    if system.extended:
        lam = np.asarray(lam, np.longdouble)
    for g, b in zip(system.groups, system.body):
        x = -b @ g.op.KinvU.T - lam[g.dofs] @ g.op.KinvB.T
        sig[g.sides] = x[:, : 3 * nS].reshape(-1, 3, nS)
        u[g.sides] = x[:, 3 * nS:].reshape(-1, 2, nP)
    return sig, u
