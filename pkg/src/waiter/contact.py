"""Friction cones, grasp matrices and the contact wrench cone (CWC).

A contact wrench ``w = [tau, f]`` is supportable iff ``w = G zeta`` for some
stacked contact forces with ``F zeta <= 0``. The CWC in face form ``H`` turns
that existence question into ``H w <= 0``, which is what the verification
maximises over inertial parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import polycone
from .errors import DimensionMismatch, SolverFailure
from .rigidbody import InertialParams, cuboid_inertia, regressor, skew
from .solvers import lp as _lp

ORTHO_TOL = 1e-10


def default_tangents(normal):
    """``t1`` = EE x-axis projected onto the contact plane (y-axis if degenerate), ``t2 = n x t1``."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    for axis in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])):
        t = axis - (axis @ n) * n
        if np.linalg.norm(t) > 1e-6:
            t1 = t / np.linalg.norm(t)
            return t1, np.cross(n, t1)
    raise ValueError("could not build tangents")  # unreachable for unit n


@dataclass(frozen=True)
class ContactPoint:
    r: np.ndarray
    normal: np.ndarray
    mu: float = 0.0
    t1: np.ndarray | None = None
    t2: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).reshape(3)
        n = np.asarray(self.normal, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(n))):
            raise ValueError("contact data must be finite")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("contact normal must be a unit vector")
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        if self.t1 is None or self.t2 is None:
            t1, t2 = default_tangents(n)
        else:
            t1 = np.asarray(self.t1, dtype=float).reshape(3)
            t2 = np.asarray(self.t2, dtype=float).reshape(3)
        R = np.column_stack([t1, t2, n])
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or np.linalg.det(R) < 0:
            raise ValueError("(t1, t2, normal) must be a right-handed orthonormal frame")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "t1", t1)
        object.__setattr__(self, "t2", t2)
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def frame(self):
        """Rows ``[t1, t2, n]``: maps EE-frame forces to contact coordinates."""
        return np.vstack([self.t1, self.t2, self.normal])


def friction_face(cp: ContactPoint):
    """5x3 linearised friction cone ``F_i`` with ``F_i f <= 0``."""
    mu = cp.mu
    P = np.array([[0, 0, -1],
                  [1, 1, -mu],
                  [1, -1, -mu],
                  [-1, 1, -mu],
                  [-1, -1, -mu]], dtype=float)
    return P @ cp.frame


def grasp_matrix(cp: ContactPoint):
    """6x3 map from a contact force to its wrench ``[r x f, f]`` about the EE origin."""
    return np.vstack([skew(cp.r), np.eye(3)])


@dataclass
class ContactSet:
    contacts: list
    _H: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.contacts = list(self.contacts)
        if not self.contacts:
            raise ValueError("a contact set needs at least one contact")

    @classmethod
    def polygon(cls, vertices, normal=(0.0, 0.0, 1.0), mu=0.0):
        """Surface contact: one point per polygon vertex, shared normal and mu."""
        return cls([ContactPoint(v, normal, mu) for v in vertices])

    @property
    def n_c(self):
        return len(self.contacts)

    @property
    def F(self):
        return scipy.linalg.block_diag(*[friction_face(c) for c in self.contacts])

    @property
    def G(self):
        return np.hstack([grasp_matrix(c) for c in self.contacts])

    @property
    def G_normal(self):
        """6 x n_c wrench of a unit normal force at each contact (frictionless planning)."""
        return np.column_stack([grasp_matrix(c) @ c.normal for c in self.contacts])

    @property
    def H(self):
        if self._H is None:
            self._H = cwc_face(self)
            self._H.setflags(write=False)
        return self._H

    def with_mu(self, mu):
        return ContactSet([ContactPoint(c.r, c.normal, mu, c.t1, c.t2) for c in self.contacts])


def cwc_face(cs: ContactSet):
    """Face form ``H`` (unit rows) of ``{G zeta | F zeta <= 0}``."""
    rays = []
    for c in cs.contacts:
        Vi = polycone.face_to_span(polycone.FaceCone(friction_face(c))).V
        rays.append(grasp_matrix(c) @ Vi)
    V = np.hstack(rays)
    nrm = np.linalg.norm(V, axis=0)
    V = V[:, nrm > polycone.TOL] / nrm[nrm > polycone.TOL]
    face = polycone.span_to_face(polycone.SpanCone(V))
    return polycone.canonicalize(face).U


@dataclass
class ForceLpResult:
    feasible: bool
    zeta: np.ndarray | None = None
    certificate: dict = field(default_factory=dict)


def force_lp(cs: ContactSet, w):
    """Find stacked contact forces with ``G zeta = w`` and ``F zeta <= 0``."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != 6:
        raise DimensionMismatch("wrench must have 6 entries")
    G, F = cs.G, cs.F
    res = _lp.solve_lp(np.zeros(G.shape[1]), A=G, b=w, G=F, h=np.zeros(F.shape[0]))
    if res.status == _lp.OPTIMAL:
        return ForceLpResult(True, res.x)
    if res.status == _lp.INFEASIBLE:
        return ForceLpResult(False, None, res.certificate)
    raise SolverFailure(f"force LP did not settle: {res.status}", res.status)


@dataclass(frozen=True)
class ComBox:
    """Convex polytope of admissible CoM positions, given by its vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.shape[1] != 3 or not np.all(np.isfinite(V)):
            raise ValueError("vertices must be finite 3-vectors")
        uniq = []
        for v in V:
            if all(np.linalg.norm(v - u) > 1e-12 for u in uniq):
                uniq.append(v)
        V = np.array(uniq)
        if V.shape[0] > 1:
            for i in range(V.shape[0]):
                if _in_hull(np.delete(V, i, axis=0), V[i]):
                    raise ValueError(f"vertex {i} is not an extreme point")
        object.__setattr__(self, "vertices", V)

    @classmethod
    def box(cls, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        corners = [[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]]
                   for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        return cls(np.array(corners))

    @property
    def n_v(self):
        return self.vertices.shape[0]

    @property
    def extents(self):
        return self.vertices.max(axis=0) - self.vertices.min(axis=0)

    @property
    def center(self):
        return 0.5 * (self.vertices.max(axis=0) + self.vertices.min(axis=0))

    def halfspaces(self):
        """``(A, b)`` with ``A c <= b`` describing the polytope (full-dimensional case)."""
        P = np.hstack([self.vertices, np.ones((self.n_v, 1))]).T
        U = polycone.canonicalize(polycone.span_to_face(polycone.SpanCone(P / np.linalg.norm(P, axis=0)))).U
        # rows u satisfy u[:3] c + u[3] <= 0 ; drop the row -t <= 0 of the homogenisation
        keep = np.linalg.norm(U[:, :3], axis=1) > 1e-9
        A, b = U[keep, :3], -U[keep, 3]
        s = np.linalg.norm(A, axis=1)
        return A / s[:, None], b / s

    def contains(self, c, tol=1e-9):
        return _in_hull(self.vertices, np.asarray(c, float), tol)


def _in_hull(P, x, tol=1e-9):
    """Is ``x`` a convex combination of the rows of ``P``? (LP feasibility)"""
    k = P.shape[0]
    A = np.vstack([P.T, np.ones((1, k))])
    b = np.concatenate([x, [1.0]])
    res = _lp.solve_lp(np.zeros(k), A=A, b=b, G=-np.eye(k), h=np.zeros(k), tol=tol)
    return res.status == _lp.OPTIMAL


@dataclass(frozen=True)
class UniformCuboidInertia:
    """Inertia about the CoM of a uniform cuboid with the given side lengths (unit mass)."""

    dims: tuple

    def __call__(self, com):
        return cuboid_inertia(1.0, self.dims)


@dataclass(frozen=True)
class FixedInertia:
    inertia_com: np.ndarray

    def __call__(self, com):
        return np.asarray(self.inertia_com, dtype=float)


def robust_vertex_params(box: ComBox, inertia_policy=None):
    """Mass-normalised parameter vectors with the CoM at each vertex of ``box``.

    ``inertia_policy(com)`` returns the inertia about the CoM; the default is
    a uniform-density cuboid spanning the box.
    """
    if inertia_policy is None:
        inertia_policy = UniformCuboidInertia(tuple(box.extents))
    return [InertialParams.from_mci(1.0, v, inertia_policy(v)) for v in box.vertices]


def sticking_margins(H, xi, eta, params_list):
    """Matrix of ``h_i^T Y(xi, eta) theta_j``; robust sticking holds iff every entry is <= 0."""
    Y = regressor(xi, eta)
    Theta = np.column_stack([p.theta for p in params_list])
    return np.asarray(H) @ Y @ Theta
