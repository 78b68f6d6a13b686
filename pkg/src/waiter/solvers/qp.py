"""Convex quadratic programs by a primal-dual (Mehrotra predictor-corrector) interior point method.

Problem form::

    minimize    1/2 x^T P x + q^T x
    subject to  Aeq x = beq
                Ain x <= bin
                lb <= x <= ub

Matrices may be dense arrays or ``scipy.sparse`` matrices; the KKT system is
factorized with LAPACK or SuperLU accordingly. When the iteration fails to
converge, feasibility of the constraint set is settled by the self-dual LP
solver so that an infeasible verdict always carries a Farkas certificate.
Converged dense problems are polished on the identified active set.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import lp as _lp
from .lp import INFEASIBLE, MAX_ITERATIONS, NUMERICAL_FAILURE, OPTIMAL


@dataclass
class QuadProgram:
    P: object
    q: np.ndarray
    Aeq: object = None
    beq: np.ndarray | None = None
    Ain: object = None
    bin: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.size
        if sp.issparse(self.P):
            self.P = sp.csc_matrix((self.P + self.P.T) * 0.5)
        else:
            P = np.asarray(self.P, dtype=float).reshape(n, n)
            P = 0.5 * (P + P.T)
            w, V = np.linalg.eigh(P)
            if w.size and w.min() < 0:
                if w.min() < -1e-10 * max(1.0, abs(w).max()):
                    raise ValueError("P must be positive semidefinite")
                P = (V * np.maximum(w, 0.0)) @ V.T
            self.P = P
        self.Aeq, self.beq = _pair(self.Aeq, self.beq, n)
        self.Ain, self.bin = _pair(self.Ain, self.bin, n)
        self.lb = None if self.lb is None else np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = None if self.ub is None else np.asarray(self.ub, dtype=float).reshape(n)

    @property
    def n(self):
        return self.q.size

    @property
    def is_sparse(self):
        return sp.issparse(self.P) or sp.issparse(self.Aeq) or sp.issparse(self.Ain)

    def inequality_rows(self):
        """All inequalities stacked as ``G x <= h`` (finite bounds included)."""
        n = self.n
        blocks, rhs = [self.Ain], [self.bin]
        eye = sp.identity(n, format="csr") if self.is_sparse else np.eye(n)
        if self.ub is not None:
            idx = np.flatnonzero(np.isfinite(self.ub))
            blocks.append(eye[idx])
            rhs.append(self.ub[idx])
        if self.lb is not None:
            idx = np.flatnonzero(np.isfinite(self.lb))
            blocks.append(-eye[idx])
            rhs.append(-self.lb[idx])
        if self.is_sparse:
            G = sp.vstack([sp.csr_matrix(B) for B in blocks], format="csr")
        else:
            G = np.vstack(blocks)
        return G, np.concatenate(rhs)


def _pair(M, v, n):
    if M is None:
        return (np.zeros((0, n)), np.zeros(0))
    if sp.issparse(M):
        M = sp.csr_matrix(M)
    else:
        M = np.asarray(M, dtype=float).reshape(-1, n)
    return M, np.asarray(v, dtype=float).reshape(-1)


@dataclass
class QPResult:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None      # equality multipliers
    z: np.ndarray | None = None      # multipliers of the stacked inequalities
    objective: float = np.nan
    iterations: int = 0
    certificate: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL


class _KKT:
    """Factorization of ``[[P + G^T W G + dI, A^T], [A, -dI]]`` with refinement."""

    def __init__(self, P, A, G, w, delta, sparse):
        n, p = P.shape[0], A.shape[0]
        self.n, self.p = n, p
        if sparse:
            H = P + G.T @ sp.diags(w) @ G
            K = sp.bmat([[H, A.T], [A, None]], format="csc")
            R = sp.diags(np.concatenate([np.full(n, delta), np.full(p, -delta)]))
            self.K = K
            self._lu = spla.splu((K + R).tocsc(), permc_spec="COLAMD")
            self._solve = self._lu.solve
        else:
            H = P + (G.T * w) @ G
            K = np.block([[H, A.T], [A, np.zeros((p, p))]])
            self.K = K
            Kr = K + np.diag(np.concatenate([np.full(n, delta), np.full(p, -delta)]))
            lu = scipy.linalg.lu_factor(Kr, check_finite=False)
            self._solve = lambda r: scipy.linalg.lu_solve(lu, r, check_finite=False)

    def solve(self, r, refine=3):
        sol = self._solve(r)
        for _ in range(refine):
            sol = sol + self._solve(r - self.K @ sol)
        return sol


def solve_qp(prob: QuadProgram, *, tol=1e-9, max_iter=80, delta=1e-10,
             certify_infeasible=True) -> QPResult:
    P, q = prob.P, prob.q
    A, b = prob.Aeq, prob.beq
    G, h = prob.inequality_rows()
    sparse = prob.is_sparse
    if sparse:
        P = sp.csc_matrix(P)
        A = sp.csr_matrix(A)
        G = sp.csr_matrix(G)
    n, p, m = q.size, A.shape[0], G.shape[0]

    nq = 1.0 + np.linalg.norm(q)
    nb = 1.0 + np.linalg.norm(b)
    nh = 1.0 + np.linalg.norm(h)

    # starting point: solve the KKT system with unit scaling, then shift into the cone
    try:
        kkt = _KKT(P, A, G, np.ones(m), delta, sparse)
        sol = kkt.solve(np.concatenate([-q + G.T @ h, b]))
    except (RuntimeError, np.linalg.LinAlgError, ValueError):
        return QPResult(NUMERICAL_FAILURE)
    x, y = sol[:n], sol[n:]
    s = h - G @ x
    z = -s.copy()
    if m:
        s = s + max(0.0, -s.min()) + 1.0
        z = z + max(0.0, -z.min()) + 1.0

    status = MAX_ITERATIONS
    for it in range(1, max_iter + 1):
        rd = P @ x + q + A.T @ y + G.T @ z
        rp = A @ x - b
        rg = G @ x + s - h
        mu = (s @ z) / m if m else 0.0
        if (np.linalg.norm(rd) / nq < tol and np.linalg.norm(rp) / nb < tol
                and np.linalg.norm(rg) / nh < tol and mu < tol):
            status = OPTIMAL
            break
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))) or max(
                np.abs(x).max(initial=0.0), np.abs(z).max(initial=0.0), np.abs(s).max(initial=0.0)) > 1e12:
            status = NUMERICAL_FAILURE
            break
        with np.errstate(all="ignore"):
            w = z / s
        if not np.all(np.isfinite(w)):
            status = NUMERICAL_FAILURE
            break
        try:
            kkt = _KKT(P, A, G, w, delta, sparse)
        except (RuntimeError, np.linalg.LinAlgError, ValueError):
            status = NUMERICAL_FAILURE
            break

        def direction(ds):
            r1 = -rd - G.T @ (w * (rg + ds / z))
            sol = kkt.solve(np.concatenate([r1, -rp]))
            dx, dy = sol[:n], sol[n:]
            dz = w * (G @ dx + rg + ds / z)
            dsv = (ds - s * dz) / z
            return dx, dy, dz, dsv

        with np.errstate(all="ignore"):
            dx, dy, dz, dsv = direction(-s * z)
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dz))):
            status = NUMERICAL_FAILURE
            break
        a_aff = min(1.0, _lp._max_step(s, dsv), _lp._max_step(z, dz))
        mu_aff = ((s + a_aff * dsv) @ (z + a_aff * dz)) / m if m else 0.0
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        with np.errstate(all="ignore"):
            dx, dy, dz, dsv = direction(-s * z - dsv * dz + sigma * mu)
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dz))):
            status = NUMERICAL_FAILURE
            break
        alpha = min(1.0, 0.99 * min(_lp._max_step(s, dsv), _lp._max_step(z, dz)))
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * dsv

    with np.errstate(all="ignore"):
        obj = float(0.5 * x @ (P @ x) + q @ x)
    if status == OPTIMAL:
        if not sparse and m:
            x, y, z = _polish(P, q, A, b, G, h, x, y, z, s)
            obj = float(0.5 * x @ (P @ x) + q @ x)
        return QPResult(OPTIMAL, x, y, z, obj, it)
    if certify_infeasible:
        feas = feasibility_certificate(A, b, G, h)
        if feas.status == INFEASIBLE:
            return QPResult(INFEASIBLE, iterations=it, certificate=feas.certificate)
    return QPResult(status, x, y, z, obj, it)


def _kkt_error(P, q, A, b, G, h, x, y, z):
    s = h - G @ x
    return max(np.abs(P @ x + q + A.T @ y + G.T @ z).max(initial=0.0),
               np.abs(A @ x - b).max(initial=0.0), max(-s.min(), 0.0), max(-z.min(), 0.0),
               np.abs(s * z).max())


def _polish(P, q, A, b, G, h, x, y, z, s):
    """Re-solve the equality KKT system on the active set the IPM identified.

    Near-dependent active rows make the interior iterate inaccurate in ``x``
    even when every residual is small; the polished point is exact on the
    guessed active set and is kept only if its KKT error is no worse.
    """
    n, p = x.size, A.shape[0]
    act = np.flatnonzero(z > s)
    Ga = G[act]
    k = act.size
    K = np.block([[P, A.T, Ga.T],
                  [A, np.zeros((p, p + k))],
                  [Ga, np.zeros((k, p + k))]])
    rhs = np.concatenate([-q, b, h[act]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    xp, yp = sol[:n], sol[n:n + p]
    zp = np.zeros_like(z)
    zp[act] = sol[n + p:]
    if not np.all(np.isfinite(sol)):
        return x, y, z
    if _kkt_error(P, q, A, b, G, h, xp, yp, zp) <= _kkt_error(P, q, A, b, G, h, x, y, z):
        return xp, yp, zp
    return x, y, z


def feasibility_certificate(A, b, G, h):
    """Run the self-dual LP on the constraint set alone."""
    A = A.toarray() if sp.issparse(A) else A
    G = G.toarray() if sp.issparse(G) else G
    n = A.shape[1] if A.size else G.shape[1]
    return _lp.solve_lp(np.zeros(n), A, b, G, h)


def solve_lp(c, Aeq=None, beq=None, Ain=None, bin=None, lb=None, ub=None, **kw):
    """LP entry point mirroring :func:`solve_qp` with ``P = 0``."""
    c = np.asarray(c, dtype=float).reshape(-1)
    prob = QuadProgram(np.zeros((c.size, c.size)), c, Aeq, beq, Ain, bin, lb, ub)
    G, h = prob.inequality_rows()
    r = _lp.solve_lp(c, prob.Aeq, prob.beq, G, h, **kw)
    return r
