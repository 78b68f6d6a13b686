"""Monomial bases, truncated moment sequences and moment/localizing matrices.

Polynomials in ``r = (x, y, z)`` are coefficient vectors over a
:class:`MonomialBasis` in graded lexicographic order, so the degree-2 block
reads ``[xx, xy, xz, yy, yz, zz]`` like ``vech``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from ..errors import DegreeOverflow, DimensionMismatch


@lru_cache(maxsize=None)
def _exponents(n, d):
    out = []
    for deg in range(d + 1):
        level = []

        def rec(prefix, left, slots):
            if slots == 1:
                level.append(tuple(prefix + [left]))
                return
            for k in range(left, -1, -1):
                rec(prefix + [k], left - k, slots - 1)
        rec([], deg, n)
        out.extend(level)
    return tuple(out)


class MonomialBasis:
    """Exponents of all monomials in ``n`` variables of degree at most ``d``."""

    def __init__(self, d, n=3):
        self.n, self.d = n, d
        self.exponents = _exponents(n, d)
        self.index = {a: i for i, a in enumerate(self.exponents)}
        self.degrees = np.array([sum(a) for a in self.exponents])

    def __len__(self):
        return len(self.exponents)

    @staticmethod
    def size(d, n=3):
        return comb(n + d, d)

    def evaluate(self, r):
        """``b_d(r)``; ``r`` may be ``(3,)`` or ``(k, 3)``."""
        r = np.asarray(r, dtype=float)
        E = np.array(self.exponents)
        return np.prod(r[..., None, :] ** E, axis=-1)

    def sub(self, d):
        return MonomialBasis(d, self.n)

    def sum_table(self, d1, d2):
        """``idx[i, j]`` = position of ``alpha_i + beta_j`` (degrees <= d1, d2) in this basis."""
        A = _exponents(self.n, d1)
        B = _exponents(self.n, d2)
        if d1 + d2 > self.d:
            raise DegreeOverflow(f"need degree {d1 + d2}, basis has {self.d}")
        return np.array([[self.index[tuple(a + b for a, b in zip(al, be))] for be in B] for al in A])


@dataclass
class TruncatedMomentSequence:
    """Moments ``y_alpha = integral of r^alpha`` for all ``|alpha| <= degree``."""

    y: np.ndarray
    degree: int

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.size != MonomialBasis.size(self.degree):
            raise DimensionMismatch(f"degree {self.degree} needs {MonomialBasis.size(self.degree)} moments")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("moments must be finite")

    @property
    def mass(self):
        return float(self.y[0])

    @property
    def basis(self):
        return MonomialBasis(self.degree)

    @classmethod
    def from_atoms(cls, weights, points, degree):
        """Moments of the discrete measure ``sum_k w_k delta(r_k)``."""
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        B = MonomialBasis(degree).evaluate(np.atleast_2d(points))
        return cls(w @ B, degree)

    def truncate(self, degree):
        return TruncatedMomentSequence(self.y[:MonomialBasis.size(degree)], degree)


def poly_degree(p):
    p = np.asarray(p, dtype=float)
    d = 0
    while MonomialBasis.size(d) < p.size:
        d += 1
    if MonomialBasis.size(d) != p.size:
        raise DimensionMismatch(f"{p.size} is not a monomial basis size")
    nz = np.flatnonzero(p)
    return int(MonomialBasis(d).degrees[nz].max()) if nz.size else 0


def riesz(f, z: TruncatedMomentSequence):
    """``L_z(f) = sum_alpha f_alpha z_alpha``."""
    f = np.asarray(f, dtype=float)
    if f.size > z.y.size:
        if np.any(f[z.y.size:] != 0):
            raise DegreeOverflow("polynomial degree exceeds the moment sequence")
        f = f[:z.y.size]
    return float(f @ z.y[:f.size])


def localizing_matrix(p, z: TruncatedMomentSequence, d):
    """``M_d(p z)``: entry ``(alpha, beta)`` is ``L_z(p r^(alpha+beta))``."""
    p = np.asarray(p, dtype=float)
    dp = poly_degree(p)
    if 2 * d + dp > z.degree:
        raise DegreeOverflow(f"localizing matrix of order {d} for degree-{dp} p needs degree {2 * d + dp}")
    full = MonomialBasis(z.degree)
    pb = MonomialBasis(dp)
    tab = full.sum_table(2 * d, dp)            # (s(2d), s(dp))
    shifted = z.y[tab] @ p[:len(pb)]          # L(p r^alpha) for |alpha| <= 2d
    pair = MonomialBasis(2 * d).sum_table(d, d)
    return shifted[pair]


def moment_matrix(z: TruncatedMomentSequence, d):
    """``M_d(z)``: entry ``(alpha, beta)`` is ``z_(alpha+beta)``."""
    if 2 * d > z.degree:
        raise DegreeOverflow(f"moment matrix of order {d} needs degree {2 * d}")
    return z.y[MonomialBasis(z.degree).sum_table(d, d)]


def affine_moment_map(degree, center, scale):
    """Matrix ``T`` with ``y = T y'`` for moments of ``r = center + scale * r'``.

    Row ``alpha`` expands ``prod_i (c_i + s_i r'_i)^alpha_i`` binomially.
    Polynomial coefficients transform the other way: ``p' = T^T p``.
    """
    B = MonomialBasis(degree)
    c = np.asarray(center, dtype=float)
    s = np.asarray(scale, dtype=float)
    T = np.zeros((len(B), len(B)))
    for i, a in enumerate(B.exponents):
        # coefficients of r'^beta in prod_k (c_k + s_k r'_k)^a_k
        terms = {(): 1.0}
        for k in range(3):
            nxt = {}
            for beta, coef in terms.items():
                for j in range(a[k] + 1):
                    val = coef * comb(a[k], j) * s[k] ** j * c[k] ** (a[k] - j)
                    nxt[beta + (j,)] = nxt.get(beta + (j,), 0.0) + val
            terms = nxt
        for beta, coef in terms.items():
            T[i, B.index[beta]] += coef
    return T
