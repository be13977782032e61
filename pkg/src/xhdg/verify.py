"""Property suite: consistency checks that need no benchmark runs.

Each check returns a CheckResult; ``run_all`` executes the whole suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import Material, apply_compliance, assemble_global, assemble_local, stabilization_values
from .driver import compute_errors, discretize, solve_case
from .geometry import INTERIOR_2, Circle, Polyline, classify, cut_cells, interface_rule, polygon_rule
from .mesh import build_uniform_mesh
from .numerics import ScalarBasis, SegmentTraceBasis, dim_p, l2_project, map_segment, segment_rule
from .problems import Problem
from .spaces import BC_INTERFACE, BC_INTERIOR, constrain_dirichlet

log = logging.getLogger(__name__)

DISK = Circle((0.5, 0.5), np.sqrt(3 / 64))
LINE = Polyline([(-0.1, 0.23), (1.1, 0.71)])


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tol:.1e}){extra}"


def _result(name, value, tol, detail="", upper=True) -> CheckResult:
    ok = bool(np.isfinite(value) and (value <= tol if upper else value >= tol))
    return CheckResult(name, ok, float(value), tol, detail)


# ----------------------------------------------------------------------------
# verification problems (not benchmark cases)


def linear_problem(geom, scheme="interface", active=(1, 2), gamma_bc="interface",
                   mat=Material(1.0, 2.0), scale=1.0) -> Problem:
    """Affine displacement with constant stress, same material on both sides."""
    G = scale * np.array([[0.3, -0.7], [0.4, 0.2]])
    c = scale * np.array([0.1, -0.25])
    eps = 0.5 * (G + G.T)
    S = mat.stress(eps)

    def u(x, side=None):
        return np.atleast_2d(x) @ G.T + c

    def sigma(x, side=None):
        return np.broadcast_to(S, (len(np.atleast_2d(x)), 2, 2)).copy()

    def f(x, side=None):
        return np.zeros((len(np.atleast_2d(x)), 2))

    return Problem("linear", geom, scheme, {1: mat, 2: mat}, u, sigma, f,
                   active=active, gamma_bc=gamma_bc)


def bubble_problem(geom, mats=None) -> Problem:
    """u = (b, b) with b = x(1-x)y(1-y): zero on the box, materials may jump."""
    mats = mats or {1: Material.plane_strain(3.0, 0.4), 2: Material.plane_strain(1.0, 0.3)}

    def parts(x):
        x = np.atleast_2d(np.asarray(x, float))
        X, Y = x[:, 0], x[:, 1]
        b = X * (1 - X) * Y * (1 - Y)
        bx, by = (1 - 2 * X) * Y * (1 - Y), X * (1 - X) * (1 - 2 * Y)
        bxx, byy, bxy = -2 * Y * (1 - Y), -2 * X * (1 - X), (1 - 2 * X) * (1 - 2 * Y)
        return b, bx, by, bxx, byy, bxy

    def u(x, side=None):
        b = parts(x)[0]
        return np.column_stack([b, b])

    def sigma(x, side):
        m = mats[side]
        _, bx, by, *_ = parts(x)
        s = np.empty((len(bx), 2, 2))
        div = bx + by
        s[:, 0, 0] = 2 * m.mu * bx + m.lam * div
        s[:, 1, 1] = 2 * m.mu * by + m.lam * div
        s[:, 0, 1] = s[:, 1, 0] = m.mu * (by + bx)
        return s

    def f(x, side):
        m = mats[side]
        _, _, _, bxx, byy, bxy = parts(x)
        lap = bxx + byy
        return np.column_stack([m.mu * lap + (m.mu + m.lam) * (bxx + bxy),
                                m.mu * lap + (m.mu + m.lam) * (bxy + byy)])

    return Problem("bubble", geom, "interface", mats, u, sigma, f)


def zero_problem(geom, **kw) -> Problem:
    return linear_problem(geom, scale=0.0, **kw)


# ----------------------------------------------------------------------------
# checks


def check_patch(n: int = 6, k: int = 1, tol: float = 1e-9) -> list[CheckResult]:
    """Affine fields are reproduced exactly by both schemes.

    Only straight cuts are used: on a curved piece the one-coordinate trace
    polynomials cannot represent an affine field restricted to the arc.
    """
    out = []
    configs = [
        ("interface scheme, straight interface", LINE, {}),
        ("boundary scheme, Dirichlet on cut boundary", LINE,
         dict(scheme="boundary", active=(1,), gamma_bc="dirichlet")),
        ("boundary scheme, Neumann on cut boundary", LINE,
         dict(scheme="boundary", active=(2,), gamma_bc="neumann")),
    ]
    for label, geom, kw in configs:
        prob = linear_problem(geom, **kw)
        sol = solve_case(prob, n, k)
        err = compute_errors(sol)
        worst = 0.0
        for i, s in enumerate(sol.dofmap.sides):
            pts, _ = s.rule(2 * k)
            uh, sh = sol.eval_side(i, pts)
            scale = max(1.0, float(np.abs(prob.u(pts)).max()))
            worst = max(worst, float(np.abs(uh - prob.u(pts)).max()) / scale,
                        float(np.abs(sh - prob.sigma(pts)).max()) / float(np.abs(prob.sigma(pts)).max()))
        out.append(_result(f"patch test ({label})", max(err["u"], err["sigma"], worst), tol))
    return out


def check_zero_data(n: int = 6, k: int = 1) -> CheckResult:
    """Zero data gives the zero solution."""
    worst = 0.0
    for geom, kw in ((DISK, {}), (LINE, dict(scheme="boundary", active=(1,), gamma_bc="neumann"))):
        sol = solve_case(zero_problem(geom, **kw), n, k)
        worst = max(worst, float(np.abs(sol.u).max()), float(np.abs(sol.sigma).max()),
                    float(np.abs(sol.trace).max()))
    return _result("zero data gives zero solution", worst, 0.0)


def check_symmetry(n: int = 8, k: int = 1, tol: float = 1e-10) -> CheckResult:
    prob = bubble_problem(DISK)
    _, dm = discretize(prob, n, k)
    M = assemble_global(dm, prob.materials, prob.f, use_cache=False).matrix
    asym = abs(M - M.T).max() / abs(M).max()
    return _result("global matrix symmetry", asym, tol)


def check_disk_geometry(n: int = 16, tol: float = 1e-10) -> list[CheckResult]:
    mesh = build_uniform_mesh(n)
    cls = classify(mesh, DISK)
    cells = cut_cells(mesh, DISK, cls)
    areas = mesh.areas()
    area = float(areas[cls.element_tag == INTERIOR_2].sum())
    area += sum(c.sides[2].area() for c in cells.values())
    part = max(abs(c.sides[1].area() + c.sides[2].area() - areas[t]) for t, c in cells.items())
    length = sum(float(interface_rule(c, 4)[1].sum()) for c in cells.values())
    r2 = DISK.radius**2
    return [
        _result("disk area", abs(area - np.pi * r2), tol, f"{area:.15f}"),
        _result("interface length", abs(length - 2 * np.pi * DISK.radius), tol, f"{length:.15f}"),
        _result("cut-cell side areas sum to element area", part, 1e-12),
    ]


def _smooth(x):
    x = np.atleast_2d(x)
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def projection_errors(n: int, r: int, geom=DISK):
    """Volume error of the side-restricted projection and the face error of
    the face projection (edge portions and interface pieces)."""
    mesh = build_uniform_mesh(n)
    cls = classify(mesh, geom)
    cells = cut_cells(mesh, geom, cls)
    vol = 0.0
    for t in range(mesh.n_elements):
        if t in cells:
            regions = [cells[t].sides[1], cells[t].sides[2]]
            rules = [reg.rule(2 * r + 8) for reg in regions]
            bases = [ScalarBasis.for_points(r, reg.bbox_points()) for reg in regions]
        else:
            tri = mesh.element_vertices(t)
            rules = [polygon_rule(tri, 2 * r + 8)]
            bases = [ScalarBasis.for_triangle(r, tri)]
        for (pts, wts), basis in zip(rules, bases):
            c = l2_project(_smooth, basis, pts, wts)
            vol += float(wts @ (_smooth(pts) - basis.eval(pts) @ c) ** 2)
    face = 0.0
    V = mesh.vertices
    faces = []
    for e, (a, b) in enumerate(mesh.edges):
        p, q = V[a], V[b]
        for t0, t1, _ in cls.edge_portions[e]:
            x0, x1 = p + t0 * (q - p), p + t1 * (q - p)
            pts, wts = map_segment(segment_rule(2 * r + 8), x0, x1)
            faces.append((SegmentTraceBasis.for_segment(r, x0, x1), pts, wts))
    for c in cells.values():
        pts, wts, _ = interface_rule(c, 2 * r + 8)
        a, b = c.gamma.endpoints
        faces.append((SegmentTraceBasis.for_segment(r, a, b), pts, wts))
    for basis, pts, wts in faces:
        c = l2_project(_smooth, basis, pts, wts)
        face += float(wts @ (_smooth(pts) - basis.eval(pts) @ c) ** 2)
    return np.sqrt(vol), np.sqrt(face)


def check_projection_rates(ns=(8, 16, 32), tol: float = 0.2) -> list[CheckResult]:
    """Projection errors decay like h^{r+1} on volumes and h^{r+1/2} on the skeleton."""
    out = []
    for r in (0, 1, 2):
        errs = np.array([projection_errors(n, r) for n in ns])
        slope_v = np.log2(errs[-2, 0] / errs[-1, 0])
        slope_f = np.log2(errs[-2, 1] / errs[-1, 1])
        out.append(_result(f"volume projection rate r={r}", abs(slope_v - (r + 1)), tol,
                           f"slope {slope_v:.3f}"))
        out.append(_result(f"skeleton projection rate r={r}", abs(slope_f - (r + 0.5)), tol,
                           f"slope {slope_f:.3f}"))
    return out


def check_basis_gradient(degree: int = 3, npts: int = 10, tol: float = 1e-7, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    tri = np.array([[0.1, 0.2], [0.35, 0.25], [0.2, 0.5]])
    basis = ScalarBasis.for_triangle(degree, tri)
    lam = rng.dirichlet(np.ones(3), npts)
    x = lam @ tri
    _, grad = basis.eval(x, grad=True)
    step = 1e-6 * basis.scale
    worst = 0.0
    for d in range(2):
        dx = np.zeros(2)
        dx[d] = step
        fd = (basis.eval(x + dx) - basis.eval(x - dx)) / (2 * step)
        ref = np.maximum(np.abs(grad[..., d]), 1.0 / basis.scale)
        worst = max(worst, float((np.abs(fd - grad[..., d]) / ref).max()))
    return _result("basis gradient vs finite differences", worst, tol)


def monolithic_solve(system, problem):
    """Dense solve of the uncondensed saddle system; returns (sigma, u, trace)."""
    dm = system.dofmap
    k = dm.degree
    nP, nS = dim_p(k), dim_p(k - 1)
    nloc = 3 * nS + 2 * nP
    ns = len(dm.sides)
    nt = dm.n_total
    N = ns * nloc + nt
    A = np.zeros((N, N))
    F = np.zeros(N)
    for i, s in enumerate(dm.sides):
        blocks = assemble_local(s, dm, problem.materials[s.side], 2 * k + 2)
        dofs = np.concatenate([dm.block_dofs(fc.block) for fc in s.faces]) + ns * nloc
        loc = i * nloc + np.arange(nloc)
        A[np.ix_(loc, loc)] += blocks.K
        A[np.ix_(loc, dofs)] += blocks.B
        A[np.ix_(dofs, loc)] += blocks.B.T
        A[np.ix_(dofs, dofs)] += blocks.Cmat
        pts, wts = s.rule(2 * k + 2)
        phi = s.basis.eval(pts)
        fv = problem.f(pts, s.side)
        F[loc[3 * nS:]] = -np.einsum("n,na,nd->da", wts, phi, fv).ravel()
    # traction loads come from the assembled system (rhs minus body terms)
    body = np.zeros(nt)
    for g, b in zip(system.groups, system.body):
        np.add.at(body, g.dofs.ravel(), (b @ np.asarray(g.op.R, float).T).ravel())
    F[ns * nloc:] = np.asarray(system.rhs, float) - body
    lam_c = constrain_dirichlet(dm, problem.g_D)
    fixed = ns * nloc + dm.n_free + np.arange(nt - dm.n_free)
    free = np.setdiff1d(np.arange(N), fixed)
    x = np.zeros(N)
    x[fixed] = lam_c
    x[free] = scipy.linalg.solve(A[np.ix_(free, free)], F[free] - A[np.ix_(free, fixed)] @ lam_c)
    xl = x[: ns * nloc].reshape(ns, nloc)
    return xl[:, : 3 * nS].reshape(ns, 3, nS), xl[:, 3 * nS:].reshape(ns, 2, nP), x[ns * nloc:]


def check_monolithic(tol: float = 1e-10) -> list[CheckResult]:
    """Condensed solve plus recovery agrees with the dense uncondensed solve."""
    out = []
    for label, n, geom in (("uncut mesh n=1", 1, Polyline([(-1.0, -1.0), (-1.0, 2.0)])),
                           ("cut mesh n=2", 2, LINE)):
        prob = bubble_problem(geom)
        for k in (1, 2):
            sol = solve_case(prob, n, k)
            sig, u, lam = monolithic_solve(sol.system, prob)
            scale = max(np.abs(sol.u).max(), np.abs(sol.sigma).max(), np.abs(sol.trace).max())
            diff = max(np.abs(sig - sol.sigma).max(), np.abs(u - sol.u).max(),
                       np.abs(lam - sol.trace).max()) / scale
            out.append(_result(f"monolithic vs condensed ({label}, k={k})", diff, tol))
    return out


def flux_residual(sol) -> float:
    """Relative residual of the trace equation on interior faces."""
    dm = sol.dofmap
    k = dm.degree
    nS = dim_p(k - 1)
    res = np.zeros(dm.n_total)
    size = np.zeros(dm.n_total)
    for i, s in enumerate(dm.sides):
        tau = stabilization_values(sol.problem.materials[s.side], s.h)
        for fc in s.faces:
            blk = dm.blocks[fc.block]
            if blk.bc != BC_INTERIOR:
                continue
            pts, wts, nrm = fc.rule(2 * k + 2)
            L = blk.basis.eval(pts)
            phi = s.basis.eval(pts)
            uh = phi @ sol.u[i].T
            c = phi[:, :nS] @ sol.sigma[i].T
            sn = np.column_stack([c[:, 0] * nrm[:, 0] + c[:, 1] * nrm[:, 1],
                                  c[:, 1] * nrm[:, 0] + c[:, 2] * nrm[:, 1]])
            lh = L @ sol.trace[dm.block_dofs(fc.block)].reshape(2, -1).T
            flux = sn - tau * (uh - lh)
            part = (L.T @ (wts[:, None] * flux)).T.ravel()
            dofs = dm.block_dofs(fc.block)
            res[dofs] += part
            size[dofs] += np.abs(part)
    return float(np.abs(res).max() / max(size.max(), 1e-300))


def check_flux_continuity(n: int = 8, k: int = 2, tol: float = 1e-9) -> CheckResult:
    sol = solve_case(bubble_problem(DISK), n, k)
    return _result("interelement flux continuity", flux_residual(sol), tol)


def energy_terms(sol):
    """(A sigma_h, sigma_h) + stabilization energy, and the data functional
    <g_jump, trace>_Gamma - (f, u_h), for homogeneous Dirichlet data."""
    dm = sol.dofmap
    prob = sol.problem
    k = dm.degree
    lhs = rhs = 0.0
    for i, s in enumerate(dm.sides):
        mat = prob.materials[s.side]
        tau = stabilization_values(mat, s.h)
        pts, wts = s.rule(2 * k + 2)
        uh, sh = sol.eval_side(i, pts)
        lhs += float(np.einsum("n,nij,nij->", wts, apply_compliance(mat, sh), sh))
        rhs -= float(np.einsum("n,nd,nd->", wts, prob.f(pts, s.side), uh))
        for fc in s.faces:
            blk = dm.blocks[fc.block]
            fp, fw, fn = fc.rule(2 * k + 2)
            L = blk.basis.eval(fp)
            lh = L @ sol.trace[dm.block_dofs(fc.block)].reshape(2, -1).T
            d = s.basis.eval(fp) @ sol.u[i].T - lh
            lhs += tau * float(np.einsum("n,nd,nd->", fw, d, d))
            if blk.bc == BC_INTERFACE and s.side == 1:
                rhs += float(np.einsum("n,nd,nd->", fw, prob.jump(fp, fn), lh))
    return lhs, rhs


def check_energy_identity(n: int = 8, k: int = 1, tol: float = 1e-9) -> CheckResult:
    sol = solve_case(bubble_problem(DISK), n, k)
    if np.abs(constrained := sol.trace[sol.dofmap.n_free:]).max() > 0:
        return CheckResult("energy identity", False, float(np.abs(constrained).max()), tol,
                           "Dirichlet data not homogeneous")
    lhs, rhs = energy_terms(sol)
    return _result("energy identity", abs(lhs - rhs) / abs(lhs), tol, f"energy {lhs:.6e}")


def check_trace_conditioning(k: int = 2) -> list[CheckResult]:
    """Dominant-coordinate trace basis stays well conditioned on interface
    pieces where the restricted element basis degenerates."""
    mesh = build_uniform_mesh(64)
    cls = classify(mesh, DISK)
    cells = cut_cells(mesh, DISK, cls)
    worst_good, worst_naive = 0.0, 0.0
    for c in cells.values():
        pts, wts, _ = interface_rule(c, 2 * k + 4)
        a, b = c.gamma.endpoints
        L = SegmentTraceBasis.for_segment(k, a, b).eval(pts)
        worst_good = max(worst_good, np.linalg.cond(L.T @ (wts[:, None] * L)))
        P = ScalarBasis.for_triangle(k, c.vertices).eval(pts)
        worst_naive = max(worst_naive, np.linalg.cond(P.T @ (wts[:, None] * P)))
    return [
        _result("trace basis mass conditioning", worst_good, 1e6),
        _result("restricted element basis ill conditioning", worst_naive, 1e10, upper=False),
    ]


CHECKS = (
    check_patch,
    check_zero_data,
    check_symmetry,
    check_disk_geometry,
    check_projection_rates,
    check_basis_gradient,
    check_monolithic,
    check_flux_continuity,
    check_energy_identity,
    check_trace_conditioning,
)


def run_all(echo=print) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            res = check()
        except Exception as exc:  # report and continue with the suite
            log.exception("check %s raised", check.__name__)
            res = CheckResult(check.__name__, False, float("nan"), float("nan"), repr(exc))
        for r in res if isinstance(res, list) else [res]:
            results.append(r)
            if echo is not None:
                echo(r.line())
    return results
