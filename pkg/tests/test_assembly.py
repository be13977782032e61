import numpy as np
import pytest

from xhdg.assembly import (
    Material,
    apply_compliance,
    assemble_global,
    assemble_local,
    check_quadrature,
    condense,
    stabilization_values,
)
from xhdg.driver import discretize
from xhdg.geometry import Polyline
from xhdg.problems import make_case
from xhdg.verify import bubble_problem

FAR = Polyline([(-1.0, -1.0), (-1.0, 2.0)])


def test_compliance_examples():
    m = Material(1.0, 1.0)
    assert np.allclose(apply_compliance(m, np.eye(2)), np.eye(2) / 4)
    w = np.array([[0.3, 0.7], [0.7, -0.3]])
    m = Material(2.5, 40.0)
    assert np.allclose(apply_compliance(m, w), w / 5.0)


def test_compliance_matches_closed_form():
    rng = np.random.default_rng(0)
    for mu, lam in [(1.0, 1.0), (1.07, 5e5), (0.3, 2.0)]:
        m = Material(mu, lam)
        w = rng.normal(size=(20, 2, 2))
        w = w + w.transpose(0, 2, 1)
        tr = w[:, 0, 0] + w[:, 1, 1]
        ref = (w - lam / (2 * mu + 2 * lam) * tr[:, None, None] * np.eye(2)) / (2 * mu)
        assert np.allclose(apply_compliance(m, w), ref, rtol=1e-12, atol=1e-14)


def test_compliance_positive_definite():
    rng = np.random.default_rng(1)
    m = Material.plane_strain(3.0, 0.499999)
    w = rng.normal(size=(100, 2, 2))
    w = w + w.transpose(0, 2, 1)
    assert np.all(np.einsum("nij,nij->n", apply_compliance(m, w), w) > 0)
    assert np.all(np.linalg.eigvalsh(m.compliance_matrix()) > 0)


def test_material_maps():
    m = Material.plane_strain(3.0, 0.4)
    assert np.isclose(m.mu, 3 / 2.8) and np.isclose(m.lam, 3 * 0.4 / (1.4 * 0.2))
    m = Material.plane_stress(8 / 3, 1 / 3)
    assert np.isclose(m.mu, 1.0) and np.isclose(m.lam, 1.0)
    for bad in [(0.0, 1.0), (1.0, 0.0), (1.0, -0.5)]:
        with pytest.raises(ValueError):
            Material(*bad)
    with pytest.raises(ValueError):
        Material.plane_strain(3.0, 0.5)


def test_stabilization_examples():
    assert stabilization_values(Material(1.5, 1.0), 0.25) == 12.0
    m = Material(2.0, 1.0)
    assert stabilization_values(m, 0.05) == 2 * stabilization_values(m, 0.1)


def _single(k, n=1, mat=Material(1.0, 1.0)):
    prob = bubble_problem(FAR, {1: mat, 2: mat})
    _, dm = discretize(prob, n, k)
    return prob, dm


def test_local_compliance_block_k1():
    _, dm = _single(1)
    side = dm.sides[0]
    blocks = assemble_local(side, dm, Material(1.0, 1.0), 4)
    area = 0.5
    # Gram of E1, E2, E3 under A with mu = lam = 1
    ref = area * np.array([[3 / 8, 0, -1 / 8], [0, 1.0, 0], [-1 / 8, 0, 3 / 8]])
    assert np.allclose(blocks.A, ref, atol=1e-15)


def test_stabilization_block_p0_entries():
    _, dm = _single(1)
    side = dm.sides[0]
    mat = Material(1.0, 1.0)
    blocks = assemble_local(side, dm, mat, 4)
    tau = stabilization_values(mat, side.h)
    for face, C in zip(side.faces, blocks.C):
        L = np.linalg.norm(face.b - face.a)
        assert np.isclose(C[0, 0], tau * L) and np.isclose(C[2, 2], tau * L)


def test_local_blocks_properties():
    prob = make_case("circle-interface")
    _, dm = discretize(prob, 8, 2)
    for side in dm.sides[:40]:
        b = assemble_local(side, dm, prob.materials[side.side], 6)
        assert np.all(np.linalg.eigvalsh(b.A) > 0)
        assert np.all(np.linalg.eigvalsh(b.S) > -1e-12 * np.abs(b.S).max())
        assert b.D.shape == (dm.n_local_sigma, dm.n_local_u)
        M, R, _, _ = condense(b, dm.n_local_sigma)
        assert np.abs(M - M.T).max() <= 1e-10 * np.abs(M).max()
        assert R.shape == (M.shape[0], dm.n_local_u)


def test_extended_condensation_agrees():
    prob = make_case("nonconvex-domain", lam=1e3)
    _, dm = discretize(prob, 8, 2)
    side = [s for s in dm.sides if s.cut][0]
    b = assemble_local(side, dm, prob.materials[1], 6)
    Md = condense(b, dm.n_local_sigma)[0]
    Me = condense(b, dm.n_local_sigma, extended=True)[0]
    assert Me.dtype == np.longdouble
    assert np.abs(Md - np.asarray(Me, float)).max() < 1e-10 * np.abs(Md).max()


def test_zero_data_zero_rhs():
    prob = make_case("circle-interface")
    _, dm = discretize(prob, 8, 1)
    zero = lambda x, *a: np.zeros((len(x), 2))  # noqa: E731
    sys_ = assemble_global(dm, prob.materials, zero, zero, zero)
    assert np.all(sys_.rhs == 0)


def test_global_symmetry_and_size():
    prob = make_case("circle-interface")
    _, dm = discretize(prob, 8, 1)
    sys_ = assemble_global(dm, prob.materials, prob.f, prob.g_N, prob.jump)
    M = sys_.matrix
    assert abs(M - M.T).max() <= 1e-10 * abs(M).max()
    Mff, r = sys_.reduced(np.zeros(dm.n_total - dm.n_free))
    assert Mff.shape == (dm.n_free, dm.n_free) and len(r) == dm.n_free


def test_cache_matches_uncached():
    prob = make_case("circle-interface")
    _, dm = discretize(prob, 8, 2)
    a = assemble_global(dm, prob.materials, prob.f, prob.g_N, prob.jump)
    b = assemble_global(dm, prob.materials, prob.f, prob.g_N, prob.jump, use_cache=False)
    assert abs(a.matrix - b.matrix).max() < 1e-12 * abs(b.matrix).max()
    assert np.abs(a.rhs - b.rhs).max() < 1e-12 * np.abs(b.rhs).max()


def test_quadrature_self_check():
    prob = make_case("circle-interface")
    _, dm = discretize(prob, 8, 2)
    check_quadrature(dm, 6)
    with pytest.raises(RuntimeError):
        check_quadrature(dm, 1)


def test_precision_selection():
    prob = make_case("nonconvex-domain", lam=1e9)
    _, dm = discretize(prob, 8, 1)
    assert assemble_global(dm, prob.materials, prob.f, prob.g_N).extended
    assert not assemble_global(dm, prob.materials, prob.f, prob.g_N, precision="double").extended
    with pytest.raises(ValueError):
        assemble_global(dm, prob.materials, prob.f, precision="quad")
