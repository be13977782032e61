"""Sparse solution of the condensed trace system."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9


class SolverError(RuntimeError):
    pass


@dataclass
class SolveReport:
    method: str
    residual: float
    positive_definite: bool
    refinements: int = 0
    iterations: int = 0

    @property
    def success(self) -> bool:
        return self.residual <= RESIDUAL_TOL


def _rel_residual(M, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - M @ x)
    return r / nb if nb > 0 else r


def _residual_extended(M: sp.csr_matrix, x, b):
    """b - M x accumulated in extended precision."""
    ld = np.longdouble
    return np.asarray(b, ld) - M.astype(ld) @ np.asarray(x, ld)


def _refine_extended(M, lu, x, b, tol, max_iter=10, target=1e-17):
    """Iterative refinement with residuals in extended precision.

    Near-incompressible materials make the trace matrix stiff enough that
    the double-precision residual floor exceeds ``tol``.  Refinement runs
    until the residual drops below ``target`` or stops improving, since a
    residual at ``tol`` still leaves an error of order cond(M) * tol.  The
    refined solution is returned in extended precision.
    """
    x = np.asarray(x, np.longdouble)
    nb = float(np.sqrt(np.sum(np.asarray(b, np.longdouble) ** 2)))
    nb = nb if nb > 0 else 1.0
    best_x, best = x, np.inf
    for it in range(max_iter):
        r = _residual_extended(M, x, b)
        res = float(np.sqrt(np.sum(r * r))) / nb
        if res < best:
            stalled = res > 0.5 * best
            best_x, best = x, res
        else:
            stalled = True
        if best <= target or (stalled and best <= tol):
            return best_x, best, it
        x = x + lu.solve(np.asarray(r, float))
    return best_x, best, max_iter


def cholesky_like(M: sp.spmatrix):
    """Symmetric-mode sparse LU with a fill-reducing ordering on M + M^T and no
    pivoting.  Returns the factor when it is a valid positive-definite
    factorisation (symmetric permutation, positive pivots), else None.
    """
    try:
        lu = spla.splu(
            sp.csc_matrix(M),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    if np.any(lu.U.diagonal() <= 0):
        return None
    return lu


def solve(M, b, method: str = "direct", tol: float = RESIDUAL_TOL, max_refine: int = 3):
    """Solve M x = b for symmetric positive definite M.

    ``method="direct"`` tries a positive-definite factorisation first and
    falls back to pivoted LU, refining with extended-precision residuals
    when double precision cannot reach ``tol`` (the solution is then
    returned as a longdouble array); ``method="cg"`` uses Jacobi-preconditioned
    conjugate gradients.  Raises SolverError if the relative residual stays
    above ``tol``.

    A long double M or b is factorised in double precision and refined
    against the extended-precision system.
    """
    M = sp.csr_matrix(M)
    exact = M.dtype == np.longdouble or np.asarray(b).dtype == np.longdouble
    M_exact, b_exact = M, np.asarray(b)
    M = sp.csr_matrix(M, dtype=float)
    b = np.asarray(b, float)
    if M.shape[0] == 0:
        return np.zeros(0), SolveReport("empty", 0.0, True)
    if not np.all(np.isfinite(b)):
        raise SolverError("non-finite right-hand side")

    if method == "cg":
        d = M.diagonal()
        if np.any(d <= 0):
            raise SolverError("matrix has non-positive diagonal entries")
        P = sp.diags(1.0 / d)
        its = [0]

        def cb(_):
            its[0] += 1

        x, info = spla.cg(M, b, rtol=tol * 1e-2, atol=0.0, M=P, maxiter=20 * M.shape[0],
                          callback=cb)
        res = _rel_residual(M, x, b)
        report = SolveReport("cg", res, True, iterations=its[0])
        if info != 0 or res > tol:
            raise SolverError(f"CG did not converge (info={info}, residual={res:.2e})")
        return x, report

    if method != "direct":
        raise ValueError(f"unknown solver method {method!r}")
    lu = cholesky_like(M)
    pd = lu is not None
    name = "positive-definite factorization"
    if lu is None:
        log.warning("positive-definite factorisation failed, using pivoted LU")
        name = "indefinite fallback"
        try:
            lu = spla.splu(sp.csc_matrix(M))
        except RuntimeError as exc:
            raise SolverError(f"indefinite fallback failed: {exc}") from exc
    x = lu.solve(b)
    res = np.inf if exact else _rel_residual(M, x, b)
    n_ref = 0
    while not exact and res > tol and n_ref < max_refine:
        x = x + lu.solve(b - M @ x)
        res = _rel_residual(M, x, b)
        n_ref += 1
    if res > tol:
        x, res, extra = _refine_extended(M_exact, lu, x, b_exact, tol)
        n_ref += extra
        name += " + extended-precision refinement"
    report = SolveReport(name, res, pd, refinements=n_ref)
    if not np.all(np.isfinite(x)) or res > tol:
        piv = np.abs(lu.U.diagonal())
        j = int(np.argmin(piv))
        raise SolverError(
            f"linear solve failed: relative residual {res:.2e}, smallest pivot "
            f"{piv[j]:.2e} at dof {int(lu.perm_c[j])}"
        )
    return x, report
