import numpy as np
import pytest
import scipy.sparse as sp

from xhdg.assembly import assemble_global
from xhdg.driver import discretize
from xhdg.problems import make_case
from xhdg.solver import SolverError, cholesky_like, solve
from xhdg.spaces import constrain_dirichlet


def test_identity():
    b = np.arange(1.0, 6.0)
    x, rep = solve(sp.identity(5), b)
    assert np.allclose(x, b) and rep.positive_definite and rep.success


def test_small_spd():
    x, rep = solve(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]))
    assert np.allclose(x, [1, 1])
    assert rep.method == "positive-definite factorization"


def test_indefinite_fallback():
    M = sp.csr_matrix([[1.0, 2.0], [2.0, 1.0]])
    assert cholesky_like(M) is None
    x, rep = solve(M, np.array([3.0, 3.0]))
    assert np.allclose(x, [1, 1])
    assert not rep.positive_definite and rep.method.startswith("indefinite fallback")


def test_singular_fails():
    with pytest.raises(SolverError):
        solve(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 0.0]))


def test_nonfinite_rhs():
    with pytest.raises(SolverError):
        solve(sp.identity(2), np.array([1.0, np.nan]))


def _case_system(n=16, k=1, **kw):
    prob = make_case("circle-interface", **kw)
    _, dm = discretize(prob, n, k)
    sys_ = assemble_global(dm, prob.materials, prob.f, prob.g_N, prob.jump)
    return sys_.reduced(constrain_dirichlet(dm, prob.g_D))


def test_case_system_positive_definite():
    M, r = _case_system()
    x, rep = solve(M, r)
    assert rep.positive_definite and rep.residual <= 1e-9


def test_unit_vector_probe():
    M, _ = _case_system(8)
    rng = np.random.default_rng(3)
    for j in rng.integers(0, M.shape[0], 5):
        e = np.zeros(M.shape[0])
        e[j] = 1.0
        x, _ = solve(M, M @ e)
        assert np.abs(x - e).max() < 1e-8


def test_cg_agrees_with_direct():
    M, r = _case_system(8)
    xd, _ = solve(M, r)
    xc, rep = solve(M, r, method="cg")
    assert rep.iterations > 0
    assert np.linalg.norm(xc - xd) <= 1e-7 * np.linalg.norm(xd)


def test_extended_refinement_reaches_tolerance():
    M, r = _case_system(16, nu2=0.499999)
    x, rep = solve(M, r)
    assert rep.residual <= 1e-9


def test_longdouble_system():
    M = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]], dtype=np.longdouble))
    b = np.array([1.0, 2.0], dtype=np.longdouble)
    x, rep = solve(M, b)
    assert "extended" in rep.method and rep.residual < 1e-17
    assert np.allclose(np.asarray(x, float), np.linalg.solve([[4, 1], [1, 3]], [1, 2]))


def test_unknown_method():
    with pytest.raises(ValueError):
        solve(sp.identity(2), np.ones(2), method="magic")
