"""Compact semialgebraic bounding shapes ``K = {r | p_j(r) >= 0}``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..solvers import lp as _lp
from .basis import MonomialBasis, poly_degree

_B2 = MonomialBasis(2)


def halfspace_poly(a, b):
    """Coefficients (degree-2 basis) of ``b - a^T r >= 0``."""
    p = np.zeros(len(_B2))
    p[0] = b
    p[1:4] = -np.asarray(a, dtype=float)
    return p


def ball_poly(center, radius):
    """Coefficients of ``radius^2 - |r - center|^2 >= 0``."""
    c = np.asarray(center, dtype=float)
    p = np.zeros(len(_B2))
    p[0] = radius**2 - c @ c
    p[1:4] = 2 * c
    p[[4, 7, 9]] = -1.0                   # xx, yy, zz
    return p


@dataclass
class BoundingShape:
    """Polynomials ``p_j`` (rows, degree-2 basis) with ``K = {r | p_j(r) >= 0 for all j}``.

    ``lo``/``hi`` is an axis-aligned box containing ``K``; it is derived by LP
    when every ``p_j`` is affine and must be supplied otherwise.
    """

    polys: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    witness: np.ndarray | None = field(default=None)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.polys, dtype=float))
        if P.shape[1] != len(_B2) or not np.all(np.isfinite(P)):
            raise ValueError("polynomials must be finite coefficient vectors of length 10")
        self.polys = P
        affine = np.all(P[:, 4:] == 0, axis=1)
        A, b = -P[affine, 1:4], P[affine, 0]
        if self.lo is None or self.hi is None:
            if not np.all(affine):
                raise ValueError("bounding box required for non-affine shapes")
            self.lo, self.hi = _lp_box(A, b)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.witness is None:
            self.witness = _chebyshev_center(A, b) if np.any(affine) else 0.5 * (self.lo + self.hi)
        self.witness = np.asarray(self.witness, dtype=float)
        if np.min(self.evaluate(self.witness)) < -1e-9:
            raise ValueError("bounding shape appears to be empty")

    @classmethod
    def box(cls, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        if np.any(hi <= lo):
            raise ValueError("box must have positive extent")
        rows = []
        for i in range(3):
            e = np.eye(3)[i]
            rows.append(halfspace_poly(-e, -lo[i]))   # r_i - lo_i >= 0
            rows.append(halfspace_poly(e, hi[i]))     # hi_i - r_i >= 0
        return cls(np.array(rows), lo, hi, 0.5 * (lo + hi))

    @classmethod
    def from_halfspaces(cls, A, b):
        """``K = {r | A r <= b}`` (must be bounded)."""
        return cls(np.array([halfspace_poly(a, bi) for a, bi in zip(np.atleast_2d(A), np.atleast_1d(b))]))

    @property
    def n_p(self):
        return self.polys.shape[0]

    @property
    def degrees(self):
        return [poly_degree(p) for p in self.polys]

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def half_extents(self):
        return 0.5 * (self.hi - self.lo)

    def evaluate(self, r):
        """``p_j(r)`` for every ``j``; ``r`` may be ``(3,)`` or ``(k, 3)``."""
        return _B2.evaluate(r) @ self.polys.T

    def contains(self, r, tol=1e-12):
        return bool(np.all(self.evaluate(r) >= -tol))

    def circumscribed_ball(self):
        """Ball through the corners of the bounding box; contains ``K``."""
        return self.center, float(np.linalg.norm(self.half_extents))

    def sample(self, rng, k):
        """Uniform samples from ``K`` by rejection from the bounding box."""
        out = []
        while len(out) < k:
            r = rng.uniform(self.lo, self.hi, size=(max(k, 16), 3))
            out.extend(r[np.all(self.evaluate(r) >= 0, axis=1)])
        return np.array(out[:k])


def _lp_box(A, b):
    lo, hi = np.zeros(3), np.zeros(3)
    for i in range(3):
        e = np.eye(3)[i]
        for sign, store in ((1.0, lo), (-1.0, hi)):
            res = _lp.solve_lp(sign * e, G=A, h=b)
            if res.status != _lp.OPTIMAL:
                raise ValueError(f"bounding shape is not compact (LP along axis {i}: {res.status})")
            store[i] = res.x[i]
    return lo, hi


def _chebyshev_center(A, b):
    nrm = np.linalg.norm(A, axis=1)
    G = np.hstack([A, nrm[:, None]])
    res = _lp.solve_lp(np.array([0, 0, 0, -1.0]), G=np.vstack([G, [0, 0, 0, 1.0]]),
                       h=np.concatenate([b, [1e3]]))
    if res.status != _lp.OPTIMAL or res.x[3] < 0:
        raise ValueError("bounding shape is empty")
    return res.x[:3]
