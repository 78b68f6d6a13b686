"""Inertial parameters, spatial algebra and the gravito-inertial wrench.

Conventions
-----------
Spatial velocities are ``xi = [omega, v]`` and accelerations (with gravity
folded in) ``eta = [omega_dot, v_dot - g]``; wrenches are ``[torque, force]``.
Everything is expressed in the end-effector (tray) frame. The inertial
parameter vector is ``theta = [m, m*c, vech(I)]`` with ``I`` taken about the
frame origin and ``vech(I) = [Ixx, Ixy, Ixz, Iyy, Iyz, Izz]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroMass, NonPositiveMass

GRAVITY = np.array([0.0, 0.0, -9.81])

_VECH_IDX = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def vech(A):
    A = np.asarray(A, dtype=float)
    return np.array([A[i, j] for i, j in _VECH_IDX])


def unvech(v):
    v = np.asarray(v, dtype=float)
    A = np.empty((3, 3))
    for k, (i, j) in enumerate(_VECH_IDX):
        A[i, j] = A[j, i] = v[k]
    return A


def skew(a):
    """Matrix ``a^x`` with ``skew(a) @ b == cross(a, b)``."""
    a = np.asarray(a, dtype=float)
    return np.array([[0.0, -a[2], a[1]],
                     [a[2], 0.0, -a[0]],
                     [-a[1], a[0], 0.0]])


def adjoint(xi):
    """Spatial cross-product matrix ``[[w^x, 0], [v^x, w^x]]``."""
    xi = np.asarray(xi, dtype=float)
    W = skew(xi[:3])
    ad = np.zeros((6, 6))
    ad[:3, :3] = W
    ad[3:, 3:] = W
    ad[3:, :3] = skew(xi[3:])
    return ad


def adjoint_transpose_map(b):
    """Matrix ``K(b)`` such that ``adjoint(a).T @ b == K(b) @ a`` for all ``a``.

    Used to differentiate the velocity-product term of the wrench.
    """
    b = np.asarray(b, dtype=float)
    K = np.zeros((6, 6))
    K[:3, :3] = skew(b[:3])
    K[:3, 3:] = skew(b[3:])
    K[3:, :3] = skew(b[3:])
    return K


@dataclass(frozen=True)
class InertialParams:
    """Rigid-body inertial parameters ``theta = [m, m c, vech(I)]``.

    ``I`` is the inertia matrix about the reference-frame origin.
    """

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if theta.shape != (10,):
            raise ValueError(f"theta must have 10 entries, got {theta.shape}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_mci(cls, mass, com, inertia_com):
        """Build from mass, CoM and the inertia matrix *about the CoM*."""
        com = np.asarray(com, dtype=float)
        I_o = np.asarray(inertia_com, dtype=float) + point_mass_inertia(mass, com)
        return cls(np.concatenate([[mass], mass * com, vech(I_o)]))

    @property
    def mass(self) -> float:
        return float(self.theta[0])

    @property
    def first_moment(self) -> np.ndarray:
        return self.theta[1:4].copy()

    @property
    def com(self) -> np.ndarray:
        if self.mass <= 0:
            raise NonPositiveMass("CoM undefined for non-positive mass")
        return self.theta[1:4] / self.mass

    @property
    def inertia(self) -> np.ndarray:
        """Inertia about the frame origin."""
        return unvech(self.theta[4:])

    @property
    def inertia_com(self) -> np.ndarray:
        return self.inertia - point_mass_inertia(self.mass, self.com)

    def __eq__(self, other):
        if not isinstance(other, InertialParams):
            return NotImplemented
        return np.array_equal(self.theta, other.theta)

    def __hash__(self):
        return hash(self.theta.tobytes())


def point_mass_inertia(mass, r):
    r = np.asarray(r, dtype=float)
    return mass * (r @ r * np.eye(3) - np.outer(r, r))


def cuboid_inertia(mass, dims):
    """Inertia of a uniform-density cuboid about its centroid."""
    a, b, c = np.asarray(dims, dtype=float)
    return mass / 12.0 * np.diag([b**2 + c**2, a**2 + c**2, a**2 + b**2])


def spatial_mass_matrix(params: InertialParams):
    m = params.mass
    C = skew(params.first_moment)
    Xi = np.zeros((6, 6))
    Xi[:3, :3] = params.inertia
    Xi[:3, 3:] = C
    Xi[3:, :3] = -C
    Xi[3:, 3:] = m * np.eye(3)
    return Xi


def _giw_theta(theta, xi, eta):
    Xi = spatial_mass_matrix(InertialParams(theta))
    return Xi @ eta - adjoint(xi).T @ Xi @ xi


def giw(params: InertialParams, xi, eta):
    """Gravito-inertial wrench ``Xi eta - ad(xi)^T Xi xi``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return _giw_theta(params.theta, xi, eta)


def regressor(xi, eta):
    """6x10 matrix ``Y`` with ``Y @ theta == giw(theta, xi, eta)``.

    Built column by column by pushing unit parameter vectors through the
    wrench, which is linear in ``theta``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Y = np.empty((6, 10))
    for i in range(10):
        e = np.zeros(10)
        e[i] = 1.0
        Y[:, i] = _giw_theta(e, xi, eta)
    return Y


def giw_jacobians(params: InertialParams, xi, eta):
    """Partial derivatives of the wrench w.r.t. ``xi`` and ``eta``."""
    Xi = spatial_mass_matrix(params)
    xi = np.asarray(xi, dtype=float)
    d_xi = -(adjoint_transpose_map(Xi @ xi) + adjoint(xi).T @ Xi)
    return d_xi, Xi


def mass_normalize(params: InertialParams) -> InertialParams:
    if not params.mass > 0:
        raise NonPositiveMass(f"mass must be positive, got {params.mass}")
    return InertialParams(params.theta / params.mass)


def params_from_point_masses(points) -> InertialParams:
    """Parameters of a collection of ``(mass, position)`` pairs, I about the origin."""
    theta = np.zeros(10)
    total = 0.0
    for mass, r in points:
        if mass < 0:
            raise ValueError("point masses must be non-negative")
        r = np.asarray(r, dtype=float)
        total += mass
        theta[0] += mass
        theta[1:4] += mass * r
        theta[4:] += vech(point_mass_inertia(mass, r))
    if total <= 0:
        raise AllZeroMass("at least one point mass must be positive")
    return InertialParams(theta)
