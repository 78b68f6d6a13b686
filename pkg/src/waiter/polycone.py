"""Polyhedral convex cones in face form ``{y | U y <= 0}`` and span form ``{V z | z >= 0}``.

Conversion uses the double description method: start from the simplicial cone
of ``k`` independent halfspaces and insert the remaining ones, combining every
adjacent pair of rays that the new halfspace separates. Span to face goes
through polarity, since the polar of ``span(V)`` is ``face(V^T)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput
from .solvers import lp as _lp

TOL = 1e-9


@dataclass(frozen=True)
class FaceCone:
    """``{y | U y <= 0}``."""

    U: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        if not np.all(np.isfinite(U)):
            raise NonFiniteInput("face matrix has non-finite entries")
        object.__setattr__(self, "U", U)

    @property
    def dim(self):
        return self.U.shape[1]

    def margins(self, y):
        return cone_margins(self, y)

    def contains(self, y, tol=TOL):
        return bool(np.all(self.margins(y) <= tol))


@dataclass(frozen=True)
class SpanCone:
    """``{V z | z >= 0}``; columns of ``V`` are unit rays."""

    V: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        if not np.all(np.isfinite(V)):
            raise NonFiniteInput("span matrix has non-finite entries")
        object.__setattr__(self, "V", V)

    @property
    def dim(self):
        return self.V.shape[0]

    @property
    def n_rays(self):
        return self.V.shape[1]

    def contains(self, w, tol=1e-8):
        """LP membership: is there ``z >= 0`` with ``V z = w``?"""
        return span_contains(self.V, w, tol)


def cone_margins(face: FaceCone, y):
    y = np.asarray(y, dtype=float)
    if y.shape[0] != face.dim:
        raise DimensionMismatch(f"vector has {y.shape[0]} entries, cone lives in R^{face.dim}")
    return face.U @ y


def span_contains(V, w, tol=1e-8):
    """Membership of ``w`` in ``span(V)`` decided by the self-dual LP.

    Minimises the l1 residual of ``V z = w`` over ``z >= 0``; ``w`` is a member
    when that residual is at most ``tol`` (relative to ``|w|``).
    """
    V = np.asarray(V, dtype=float)
    w = np.asarray(w, dtype=float)
    n, k = V.shape
    if k == 0:
        return bool(np.linalg.norm(w) <= tol)
    # variables [z (k), e (n)],  -e <= V z - w <= e
    c = np.concatenate([np.zeros(k), np.ones(n)])
    G = np.block([[V, -np.eye(n)], [-V, -np.eye(n)], [-np.eye(k), np.zeros((k, n))]])
    h = np.concatenate([w, -w, np.zeros(k)])
    res = _lp.solve_lp(c, G=G, h=h)
    if not res.ok:
        raise RuntimeError(f"membership LP failed: {res.status}")
    return bool(res.objective <= tol * max(1.0, np.linalg.norm(w)))


def _normalize_rows(U, tol):
    nrm = np.linalg.norm(U, axis=1)
    keep = nrm > tol
    return U[keep] / nrm[keep, None]


def _dedupe(R, tol):
    """Drop repeated unit vectors (rows)."""
    out = []
    for r in R:
        if all(r @ s < 1.0 - tol for s in out):
            out.append(r)
    return np.array(out).reshape(-1, R.shape[1])


def _pointed_extreme_rays(A, tol):
    """Extreme rays of the pointed cone ``{y | A y <= 0}`` with ``rank(A) = dim``."""
    m, k = A.shape
    # pick k independent rows, greedily by Gram-Schmidt
    basis, Q = [], np.zeros((0, k))
    for i in range(m):
        v = A[i] - Q.T @ (Q @ A[i])
        if np.linalg.norm(v) > 1e-7:
            basis.append(i)
            Q = np.vstack([Q, v / np.linalg.norm(v)])
        if len(basis) == k:
            break
    AB = A[basis]
    rays = -np.linalg.inv(AB).T          # row j is tight on every basis row but j
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    done = list(basis)
    rest = [i for i in range(m) if i not in basis]
    for i in rest:
        a = A[i]
        vals = rays @ a
        pos = np.flatnonzero(vals > tol)
        if pos.size == 0:
            done.append(i)
            continue
        neg = np.flatnonzero(vals < -tol)
        zero_sets = np.abs(rays @ A[done].T) <= tol       # (n_rays, n_done)
        new = []
        for p in pos:
            for q in neg:
                common = zero_sets[p] & zero_sets[q]
                if common.sum() < k - 2:
                    continue
                # adjacent iff no third ray is tight on all of the common constraints
                others = np.all(zero_sets[:, common], axis=1)
                others[[p, q]] = False
                if np.any(others):
                    continue
                r = vals[p] * rays[q] - vals[q] * rays[p]
                nr = np.linalg.norm(r)
                if nr > tol:
                    new.append(r / nr)
        keep = np.ones(len(rays), dtype=bool)
        keep[pos] = False
        rays = np.vstack([rays[keep]] + ([np.array(new)] if new else []))
        done.append(i)
        if rays.shape[0] == 0:
            break
    return _dedupe(rays, tol) if rays.shape[0] else rays


def face_to_span(face: FaceCone, tol=TOL) -> SpanCone:
    """Generating rays of ``face(U)``; a lineality space appears as opposite ray pairs."""
    U = face.U
    n = U.shape[1]
    if n < 1:
        raise DimensionMismatch("cone dimension must be at least 1")
    Un = _normalize_rows(U, tol)
    if Un.shape[0] == 0:
        return SpanCone(np.hstack([np.eye(n), -np.eye(n)]))
    _, sv, Vt = np.linalg.svd(Un)
    rank = int(np.sum(sv > 1e-9))
    B = Vt[:rank].T                 # row space basis
    L = Vt[rank:].T                 # lineality space
    rays = _pointed_extreme_rays(Un @ B, tol) if rank else np.zeros((0, 0))
    cols = []
    if rays.shape[0]:
        full = rays @ B.T
        full /= np.linalg.norm(full, axis=1, keepdims=True)
        cols.append(full.T)
    if L.shape[1]:
        cols.extend([L, -L])
    if not cols:
        return SpanCone(np.zeros((n, 0)))
    return SpanCone(np.hstack(cols))


def span_to_face(span: SpanCone, tol=TOL) -> FaceCone:
    """Halfspaces of ``span(V)``: the rows are the generators of its polar ``face(V^T)``."""
    V = span.V
    n = V.shape[0]
    if V.shape[1] == 0:
        return FaceCone(np.vstack([np.eye(n), -np.eye(n)]))
    polar = face_to_span(FaceCone(V.T), tol)
    if polar.n_rays == 0:
        # span(V) is the whole space
        return FaceCone(np.zeros((0, n)))
    return FaceCone(polar.V.T)


def is_redundant(U, i, tol=TOL):
    """Row ``i`` is implied by the others iff ``max u_i y`` over the rest stays at 0."""
    others = np.delete(U, i, axis=0)
    G = np.vstack([others, U[i]])
    h = np.concatenate([np.zeros(others.shape[0]), [1.0]])
    res = _lp.solve_lp(-U[i], G=G, h=h)
    if not res.ok:
        raise RuntimeError(f"redundancy LP failed: {res.status}")
    return -res.objective < 0.5


def canonicalize(face: FaceCone, tol=TOL) -> FaceCone:
    """Unit rows, no duplicates, no rows implied by the others."""
    U = _dedupe(_normalize_rows(face.U, tol), tol)
    i = 0
    while i < U.shape[0]:
        if U.shape[0] > 1 and is_redundant(U, i, tol):
            U = np.delete(U, i, axis=0)
        else:
            i += 1
    return FaceCone(U.reshape(-1, face.dim))
