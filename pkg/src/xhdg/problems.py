"""Manufactured benchmark problems with closed-form solutions.

Every field callable takes an (N, 2) array of points and the side label
(1 or 2) of the region the points belong to.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import Material, apply_compliance
from .geometry import Circle, Slit

CASES = ("circle-interface", "circle-domain", "nonconvex-domain", "crack-tip")


@dataclass
class Problem:
    name: str
    geometry: object
    scheme: str
    materials: dict
    u: callable
    sigma: callable
    f: callable
    active: tuple = (1, 2)
    gamma_bc: str = "interface"
    apex: np.ndarray | None = None
    default_n: tuple = (8, 16, 32, 64)
    params: dict = field(default_factory=dict)

    def g_D(self, x, side):
        return self.u(x, side)

    def g_N(self, x, n, side):
        return np.einsum("nij,nj->ni", self.sigma(x, side), n)

    def jump(self, x, n):
        """(sigma_1 - sigma_2) n on the interface."""
        return np.einsum("nij,nj->ni", self.sigma(x, 1) - self.sigma(x, 2), n)

    def strain(self, x, side):
        return apply_compliance(self.materials[side], self.sigma(x, side))


def _pts(x):
    x = np.atleast_2d(np.asarray(x, float))
    return x[:, 0], x[:, 1]


# polynomial field shared by the circle cases: divergence free, zero on the box
def _a(t):
    return t**2 * (t - 1) ** 2


def _b(t):
    return 2 * t**3 - 3 * t**2 + t


def _db(t):
    return 6 * t**2 - 6 * t + 1


def _poly_u(x, side=None):
    X, Y = _pts(x)
    return np.column_stack([-_a(X) * _b(Y), _a(Y) * _b(X)])


def _poly_grad(x):
    X, Y = _pts(x)
    g = np.empty((len(X), 2, 2))
    g[:, 0, 0] = -2 * _b(X) * _b(Y)
    g[:, 0, 1] = -_a(X) * _db(Y)
    g[:, 1, 0] = _a(Y) * _db(X)
    g[:, 1, 1] = 2 * _b(X) * _b(Y)
    return g


def _poly_laplacian(x):
    X, Y = _pts(x)
    l1 = -2 * _db(X) * _b(Y) - _a(X) * (12 * Y - 6)
    l2 = 2 * _db(Y) * _b(X) + _a(Y) * (12 * X - 6)
    return np.column_stack([l1, l2])


def _poly_fields(materials):
    def sigma(x, side):
        g = _poly_grad(x)
        return materials[side].mu * (g + g.transpose(0, 2, 1))

    def f(x, side):
        return materials[side].mu * _poly_laplacian(x)

    return sigma, f


def circle_interface(nu2: float = 0.4) -> Problem:
    mats = {1: Material.plane_strain(3.0, 0.4), 2: Material.plane_strain(3.0, nu2)}
    sigma, f = _poly_fields(mats)
    return Problem(
        "circle-interface", Circle((0.5, 0.5), np.sqrt(3 / 64)), "interface", mats,
        _poly_u, sigma, f, params={"nu2": nu2},
    )


def circle_domain(nu: float = 0.49) -> Problem:
    m = Material.plane_strain(3.0, nu)
    mats = {1: m, 2: m}
    sigma, f = _poly_fields(mats)
    return Problem(
        "circle-domain", Circle((0.5, 0.5), np.sqrt(3 / 16)), "boundary", mats,
        _poly_u, sigma, f, active=(2,), gamma_bc="dirichlet", params={"nu": nu},
    )


def nonconvex_domain(lam: float = 1.0) -> Problem:
    m = Material(1.0, lam)
    mats = {1: m, 2: m}

    def u(x, side=None):
        X, Y = _pts(x)
        return np.column_stack([Y**4, X**4])

    def sigma(x, side):
        X, Y = _pts(x)
        s = np.zeros((len(X), 2, 2))
        s[:, 0, 1] = s[:, 1, 0] = 4 * m.mu * (X**3 + Y**3)
        return s

    def f(x, side):
        X, Y = _pts(x)
        return np.column_stack([12 * m.mu * Y**2, 12 * m.mu * X**2])

    return Problem(
        "nonconvex-domain", Circle((0.5, 0.5), np.sqrt(3 / 64)), "boundary", mats,
        u, sigma, f, active=(1,), gamma_bc="neumann", params={"lambda": lam},
    )


class WilliamsField:
    """Mode I near-tip field of a straight crack along -x from ``tip``."""

    def __init__(self, tip, mat: Material, nu: float, K_I: float = np.sqrt(np.pi / 2)):
        self.tip = np.asarray(tip, float)
        self.mu = mat.mu
        self.kappa = (3 - nu) / (1 + nu)
        self.K_I = K_I

    def polar(self, x, side):
        X, Y = _pts(x)
        dx = X - self.tip[0]
        dy = Y - self.tip[1]
        r = np.hypot(dx, dy)
        if np.any(r == 0):
            raise ValueError("near-tip field is singular at the crack tip")
        theta = np.arctan2(dy, dx)
        # points on the crack faces belong to the side they were sampled from
        on_faces = (dy == 0) & (dx < 0)
        theta = np.where(on_faces, np.pi if side == 1 else -np.pi, theta)
        return r, theta

    def u(self, x, side):
        r, th = self.polar(x, side)
        c = self.K_I / (2 * self.mu) * np.sqrt(r / (2 * np.pi))
        h = th / 2
        u1 = c * np.cos(h) * (self.kappa - 1 + 2 * np.sin(h) ** 2)
        u2 = c * np.sin(h) * (self.kappa + 1 - 2 * np.cos(h) ** 2)
        return np.column_stack([u1, u2])

    def sigma(self, x, side):
        r, th = self.polar(x, side)
        c = self.K_I / np.sqrt(2 * np.pi * r)
        h = th / 2
        s = np.empty((len(r), 2, 2))
        s[:, 0, 0] = c * np.cos(h) * (1 - np.sin(h) * np.sin(3 * h))
        s[:, 1, 1] = c * np.cos(h) * (1 + np.sin(h) * np.sin(3 * h))
        s[:, 0, 1] = s[:, 1, 0] = c * np.cos(h) * np.sin(h) * np.cos(3 * h)
        return s


def crack_tip() -> Problem:
    E, nu = 8.0 / 3.0, 1.0 / 3.0
    m = Material.plane_stress(E, nu)
    mats = {1: m, 2: m}
    tip = np.array([0.5, 0.5])
    w = WilliamsField(tip, m, nu)

    def f(x, side):
        return np.zeros((len(np.atleast_2d(x)), 2))

    return Problem(
        "crack-tip", Slit((0.0, 0.5), tip), "boundary", mats, w.u, w.sigma, f,
        active=(1, 2), gamma_bc="neumann", apex=tip, default_n=(9, 17, 33, 65, 129),
        params={"K_I": w.K_I, "kappa": w.kappa},
    )


def make_case(name: str, nu2=None, nu=None, lam=None) -> Problem:
    """Build a named benchmark; the material knob depends on the case."""
    knobs = {"nu2": nu2, "nu": nu, "lam": lam}
    allowed = {
        "circle-interface": "nu2",
        "circle-domain": "nu",
        "nonconvex-domain": "lam",
        "crack-tip": None,
    }
    if name not in allowed:
        raise ValueError(f"unknown case {name!r}; choose from {', '.join(CASES)}")
    for key, val in knobs.items():
        if val is not None and key != allowed[name]:
            raise ValueError(f"parameter {key} does not apply to case {name}")
    if name == "circle-interface":
        return circle_interface(0.4 if nu2 is None else nu2)
    if name == "circle-domain":
        return circle_domain(0.49 if nu is None else nu)
    if name == "nonconvex-domain":
        return nonconvex_domain(1.0 if lam is None else lam)
    return crack_tip()


FIELDS = ("u", "sigma", "f", "gD", "gN", "gNGamma")


def evaluate(problem: Problem, field: str, x, side: int = 1, normal=None):
    """Evaluate one exact field of ``problem`` at points ``x``.

    ``field`` is one of FIELDS; the traction fields need unit ``normal``
    vectors (for gNGamma pointing from side 1 into side 2).
    """
    if field == "u":
        return problem.u(x, side)
    if field == "sigma":
        return problem.sigma(x, side)
    if field == "f":
        return problem.f(x, side)
    if field == "gD":
        return problem.g_D(x, side)
    if field in ("gN", "gNGamma"):
        if normal is None:
            raise ValueError(f"field {field} needs unit normals")
        n = np.broadcast_to(np.asarray(normal, float), np.atleast_2d(x).shape)
        return problem.g_N(x, n, side) if field == "gN" else problem.jump(x, n)
    raise ValueError(f"unknown field {field!r}; choose from {', '.join(FIELDS)}")
