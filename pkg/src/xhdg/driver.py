"""End-to-end solves, error norms and convergence studies."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass

import numpy as np

from .assembly import apply_compliance, assemble_global, recover_local
from .geometry import classify, cut_cells
from .mesh import build_uniform_mesh
from .solver import solve
from .spaces import build_dofmap, constrain_dirichlet

log = logging.getLogger(__name__)

ERROR_QUAD_DEGREE = 12


@dataclass
class FieldSolution:
    problem: object
    mesh: object
    dofmap: object
    system: object
    sigma: np.ndarray  # (n_sides, 3, dim P_{k-1})
    u: np.ndarray  # (n_sides, 2, nP)
    trace: np.ndarray
    report: object

    def eval_side(self, i: int, x):
        """(u_h, sigma_h) at points x of element side i."""
        phi = self.dofmap.sides[i].basis.eval(x)
        return _uh(phi, self.u[i]), _sigh(phi[:, : self.sigma.shape[2]], self.sigma[i])


def _uh(phi, coef):
    return phi @ coef.T


def _sigh(phi, coef):
    c = phi @ coef.T  # (N, 3)
    s = np.empty((len(phi), 2, 2))
    s[:, 0, 0] = c[:, 0]
    s[:, 0, 1] = s[:, 1, 0] = c[:, 1]
    s[:, 1, 1] = c[:, 2]
    return s


def discretize(problem, n: int, k: int):
    mesh = build_uniform_mesh(n)
    cls = classify(mesh, problem.geometry)
    cells = cut_cells(mesh, problem.geometry, cls)
    dofmap = build_dofmap(
        mesh, problem.geometry, cls, cells, k,
        scheme=problem.scheme, active=problem.active, gamma_bc=problem.gamma_bc,
        apex=problem.apex,
    )
    return mesh, dofmap


def solve_case(problem, n: int, k: int, method: str = "direct", quad_degree=None) -> FieldSolution:
    """Discretize, assemble, solve and recover the local fields."""
    t0 = time.perf_counter()
    mesh, dofmap = discretize(problem, n, k)
    system = assemble_global(
        dofmap, problem.materials, problem.f, problem.g_N, problem.jump, quad_degree=quad_degree
    )
    lam_c = constrain_dirichlet(dofmap, problem.g_D)
    Mff, r = system.reduced(lam_c)
    lam_f, report = solve(Mff, r, method=method)
    lam = np.concatenate([lam_f, lam_c])
    sig, u = recover_local(system, lam)
    log.info("%s n=%d k=%d: %d trace dofs, %s, residual %.1e, %.1fs", problem.name, n, k,
             dofmap.n_free, report.method, report.residual, time.perf_counter() - t0)
    return FieldSolution(problem, mesh, dofmap, system, sig, u, np.asarray(lam, float), report)


def _side_batches(sol: FieldSolution, degree: int):
    """Yield (side indices, side label, points (g, N, 2), weights (N,), phi (N, nP))."""
    dm = sol.dofmap
    for g in sol.system.groups:
        ref = dm.sides[g.sides[0]]
        pts, wts = ref.rule(degree)
        phi = ref.basis.eval(pts)
        yield g.sides, ref.side, pts[None] + g.shifts[:, None, :], wts, phi


def compute_errors(sol: FieldSolution, degree: int = ERROR_QUAD_DEGREE) -> dict:
    """Relative L2 errors of displacement, stress and strain over the active region."""
    prob = sol.problem
    acc = dict.fromkeys(("u", "u0", "s", "s0", "e", "e0"), 0.0)
    for idx, side, pts, wts, phi in _side_batches(sol, degree):
        g, N = pts.shape[:2]
        X = pts.reshape(-1, 2)
        mat = prob.materials[side]
        u_ex = prob.u(X, side).reshape(g, N, 2)
        s_ex = prob.sigma(X, side).reshape(g, N, 2, 2)
        e_ex = apply_compliance(mat, s_ex)
        uh = np.einsum("na,gda->gnd", phi, sol.u[idx])
        c = np.einsum("na,gca->gnc", phi[:, : sol.sigma.shape[2]], sol.sigma[idx])
        sh = np.empty((g, N, 2, 2))
        sh[..., 0, 0] = c[..., 0]
        sh[..., 0, 1] = sh[..., 1, 0] = c[..., 1]
        sh[..., 1, 1] = c[..., 2]
        eh = apply_compliance(mat, sh)
        acc["u"] += np.einsum("n,gnd->", wts, (u_ex - uh) ** 2)
        acc["u0"] += np.einsum("n,gnd->", wts, u_ex**2)
        acc["s"] += np.einsum("n,gnij->", wts, (s_ex - sh) ** 2)
        acc["s0"] += np.einsum("n,gnij->", wts, s_ex**2)
        acc["e"] += np.einsum("n,gnij->", wts, (e_ex - eh) ** 2)
        acc["e0"] += np.einsum("n,gnij->", wts, e_ex**2)
    return {
        "u": float(np.sqrt(acc["u"] / acc["u0"])),
        "sigma": float(np.sqrt(acc["s"] / acc["s0"])),
        "strain": float(np.sqrt(acc["e"] / acc["e0"])),
    }


def convergence_orders(hs, errs) -> list:
    out = [float("nan")]
    for i in range(1, len(errs)):
        out.append(float(np.log(errs[i - 1] / errs[i]) / np.log(hs[i - 1] / hs[i])))
    return out


@dataclass
class StudyRow:
    N: int
    h: float
    err_u: float
    order_u: float
    err_sigma: float
    order_sigma: float
    err_strain: float = float("nan")


def run_study(problem, k: int, ns, method: str = "direct") -> list[StudyRow]:
    """Solve on each mesh size in ``ns`` and report errors and observed orders."""
    hs, eu, es, ee = [], [], [], []
    for n in ns:
        sol = solve_case(problem, n, k, method=method)
        err = compute_errors(sol)
        hs.append(sol.mesh.h)
        eu.append(err["u"])
        es.append(err["sigma"])
        ee.append(err["strain"])
    ou = convergence_orders(hs, eu)
    os_ = convergence_orders(hs, es)
    return [StudyRow(n, h, a, b, c, d, e) for n, h, a, b, c, d, e in zip(ns, hs, eu, ou, es, os_, ee)]


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "h", "err_u", "order_u", "err_sigma", "order_sigma"])
        for r in rows:
            w.writerow([r.N, f"{r.h:.10e}", f"{r.err_u:.10e}", "" if np.isnan(r.order_u) else f"{r.order_u:.4f}",
                        f"{r.err_sigma:.10e}", "" if np.isnan(r.order_sigma) else f"{r.order_sigma:.4f}"])


def dump_fields(sol: FieldSolution, path, degree: int | None = None) -> int:
    """Write x, y, u1, u2, s11, s12, s22 at interior quadrature points of every
    active element side.  Returns the number of rows written."""
    deg = 2 * sol.dofmap.degree if degree is None else degree
    rows = []
    for idx, _, pts, _, phi in _side_batches(sol, deg):
        uh = np.einsum("na,gda->gnd", phi, sol.u[idx])
        c = np.einsum("na,gca->gnc", phi[:, : sol.sigma.shape[2]], sol.sigma[idx])
        rows.append(np.concatenate([pts, uh, c], axis=2).reshape(-1, 7))
    data = np.concatenate(rows)
    np.savetxt(path, data, fmt="%.12e", header="x y u1 u2 s11 s12 s22")
    return len(data)
