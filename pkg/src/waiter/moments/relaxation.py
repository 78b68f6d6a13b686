"""Realizability conditions and the worst-case sticking-violation SDP.

Both are posed in normalised coordinates ``r' = (r - center) / half_extent``
of the bounding shape's box, which maps ``K`` into ``[-1, 1]^3`` and keeps
every moment of order one or less. Moments transform linearly (``y = T y'``),
so the original problem is recovered exactly.

Besides the moment matrix and one localizing matrix per ``p_j``, the
relaxation includes the localizing matrix of the circumscribed ball
``3 - |r'|^2 >= 0``. It is implied by ``K`` itself, so every realizable
sequence satisfies it, but it bounds the top-degree moments: without it the
feasible set is unbounded and the interior point method loses its strictly
feasible dual.
"""
from __future__ import annotations

from functools import cached_property
from math import ceil

import numpy as np

from ..errors import SolverFailure, UnboundedRelaxation
from ..rigidbody import InertialParams, unvech, vech
from ..solvers import OPTIMAL, UNBOUNDED, PsdBlock, SdpProblem, solve_sdp, solve_sdp_batch
from .basis import MonomialBasis, TruncatedMomentSequence, affine_moment_map, poly_degree
from .shape import BoundingShape, ball_poly


def params_to_tms(params: InertialParams) -> TruncatedMomentSequence:
    """Degree-2 moments ``[m, m c, vech(S)]`` with ``S = tr(I)/2 * 1 - I``."""
    I = params.inertia
    S = 0.5 * np.trace(I) * np.eye(3) - I
    return TruncatedMomentSequence(np.concatenate([[params.mass], params.first_moment, vech(S)]), 2)


def tms_to_params(z: TruncatedMomentSequence) -> InertialParams:
    """Inverse of :func:`params_to_tms`, ``I = tr(S) 1 - S``."""
    y = z.y
    S = unvech(y[4:10])
    I = np.trace(S) * np.eye(3) - S
    return InertialParams(np.concatenate([y[:4], vech(I)]))


def _theta_from_moments():
    """10x10 ``P`` with ``theta = P y[:10]``."""
    P = np.zeros((10, 10))
    for k in range(10):
        e = np.zeros(10)
        e[k] = 1.0
        P[:, k] = tms_to_params(TruncatedMomentSequence(e, 2)).theta
    return P


THETA_FROM_Y = _theta_from_moments()
Y_FROM_THETA = np.linalg.inv(THETA_FROM_Y)


def localizing_coefficients(p, order, full: MonomialBasis):
    """``F[k]`` with ``M_order(p y) = sum_k y_k F[k]`` over the moments of ``full``."""
    p = np.asarray(p, dtype=float)
    dp = poly_degree(p)
    pb = MonomialBasis(dp)
    rows = MonomialBasis(order).exponents
    s = len(rows)
    F = np.zeros((len(full), s, s))
    for g, gam in enumerate(pb.exponents):
        if p[g] == 0.0:
            continue
        for i, a in enumerate(rows):
            for j, b in enumerate(rows):
                k = full.index[tuple(x + y + z for x, y, z in zip(a, b, gam))]
                F[k, i, j] += p[g]
    return F


class Relaxation:
    """Moment relaxation of order ``r`` over a bounding shape, in normalised coordinates."""

    def __init__(self, shape: BoundingShape, order=2, ball=True):
        if order < 1:
            raise ValueError("relaxation order must be at least 1")
        self.shape = shape
        self.order = order
        self.full = MonomialBasis(2 * order)
        self.center = shape.center
        self.scale = shape.half_extents
        self.T = affine_moment_map(2 * order, self.center, self.scale)
        T2 = affine_moment_map(2, self.center, self.scale)
        polys = [T2.T @ p for p in shape.polys]
        if ball:
            polys.append(ball_poly(np.zeros(3), np.sqrt(3.0)))
        self.polys = polys
        self.blocks = [localizing_coefficients(np.array([1.0]), order, self.full)]
        for p in polys:
            d = order - ceil(poly_degree(p) / 2)
            if d < 0:
                raise ValueError("relaxation order too low for the shape polynomials")
            self.blocks.append(localizing_coefficients(p, d, self.full))
        # theta = P T[:10] y'
        self.theta_map = THETA_FROM_Y @ self.T[:10]

    @property
    def n_moments(self):
        return len(self.full)

    def psd_blocks(self):
        return [PsdBlock(np.zeros(F.shape[1:]), F) for F in self.blocks]

    def block_values(self, y_norm):
        return [np.tensordot(y_norm, F, axes=(0, 0)) for F in self.blocks]

    def normalize(self, y):
        """Original-coordinate moments (full degree) to normalised ones."""
        return np.linalg.solve(self.T, y)

    # -------------------------------------------------------------- realizability

    def realizability_problem(self, z: TruncatedMomentSequence) -> SdpProblem:
        """Phase-I SDP: maximise ``t`` with every block ``>= t 1`` and ``t <= 1``.

        Variables are ``[y', t]``; the degree <= 2 moments are pinned to ``z``.
        The conditions hold iff the optimal ``t`` is non-negative.
        """
        n = self.n_moments
        fixed = z.truncate(2).y
        A = np.hstack([self.T[:10], np.zeros((10, 1))])
        blocks = []
        for F in self.blocks:
            s = F.shape[1]
            Ft = np.concatenate([F, -np.eye(s)[None]], axis=0)
            blocks.append(PsdBlock(np.zeros((s, s)), Ft))
        c = np.zeros(n + 1)
        c[-1] = -1.0
        G = np.zeros((1, n + 1))
        G[0, -1] = 1.0
        return SdpProblem(c, blocks, A_eq=A, b_eq=fixed, G=G, h=[1.0])

    def realizability_margin(self, z: TruncatedMomentSequence):
        res = solve_sdp(self.realizability_problem(z))
        if res.status != OPTIMAL:
            raise SolverFailure(f"realizability SDP: {res.status}", res.status)
        return -res.objective

    # -------------------------------------------------------------- worst-case violation

    @cached_property
    def _violation_constraints(self):
        return self.psd_blocks()

    def violation_problem(self, com_set=None) -> SdpProblem:
        """Constraints of the mass-normalised worst-case problem (objective left zero)."""
        n = self.n_moments
        A = np.zeros((1, n))
        A[0, 0] = 1.0
        G = h = None
        if com_set is not None:
            Ac, bc = com_set.halfspaces()
            G = Ac @ self.T[1:4]
            h = bc
        return SdpProblem(np.zeros(n), self._violation_constraints, A_eq=A, b_eq=[1.0], G=G, h=h)

    def max_violation(self, g, com_set=None, chunk=1024):
        """Upper bounds on ``max g_i^T theta`` over realizable unit-mass ``theta``.

        ``g`` is ``(B, 10)`` (e.g. rows of ``H Y``). Returns ``(bounds, thetas, status)``.
        """
        g = np.atleast_2d(np.asarray(g, dtype=float))
        prob = self.violation_problem(com_set)
        C = -g @ self.theta_map
        res = solve_sdp_batch(prob, C, chunk=chunk)
        if np.any(res.status == UNBOUNDED):
            raise UnboundedRelaxation("worst-case SDP unbounded: bounding shape not compact?", UNBOUNDED)
        # the dual objective certifies the bound; take the larger of the two for safety
        bounds = -np.minimum(res.objective, res.dual_objective)
        thetas = res.x @ self.theta_map.T
        return bounds, thetas, res.status


def realizability_conditions(z: TruncatedMomentSequence, shape: BoundingShape, r=2) -> SdpProblem:
    return Relaxation(shape, r).realizability_problem(z)


def is_realizable(z, shape: BoundingShape, r=2, tol=1e-7):
    """Do the moment/localizing conditions of order ``r`` admit an extension of ``z``?"""
    if isinstance(z, InertialParams):
        z = params_to_tms(z)
    scale = max(1.0, abs(z.mass))
    return Relaxation(shape, r).realizability_margin(z) >= -tol * scale


def max_violation_sdp(h, Y, shape: BoundingShape, com_set=None, r=2):
    """Worst case of ``h^T Y theta``; returns ``(bound, theta)``."""
    g = np.asarray(h, dtype=float) @ np.asarray(Y, dtype=float)
    bounds, thetas, status = Relaxation(shape, r).max_violation(g[None], com_set)
    if status[0] != OPTIMAL:
        raise SolverFailure(f"worst-case SDP: {status[0]}", status[0])
    return float(bounds[0]), InertialParams(thetas[0])
