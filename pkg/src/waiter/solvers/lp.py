"""Linear programs via an interior point method on the homogeneous self-dual embedding.

Problem form::

    minimize    c^T x
    subject to  A x = b
                G x <= h

The embedding always has a strictly interior starting point, and its limit
either yields an optimal pair (``tau > 0``) or a Farkas-type certificate of
primal or dual infeasibility (``kappa > 0``). That is what makes the
infeasible verdicts used by the contact-force oracle trustworthy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    s: np.ndarray | None = None
    objective: float = np.nan
    iterations: int = 0
    # primal infeasibility: (y, z) with z >= 0, A^T y + G^T z ~ 0, b^T y + h^T z = -1
    # dual infeasibility: x with A x ~ 0, G x <= ~0, c^T x = -1
    certificate: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _as2d(M, ncols):
    if M is None:
        return np.zeros((0, ncols))
    M = np.asarray(M, dtype=float)
    return M.reshape(-1, ncols)


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def solve_lp(c, A=None, b=None, G=None, h=None, *, tol=1e-9, max_iter=100,
             reg=1e-11):
    """Solve a dense LP. Returns an :class:`LPResult`; never raises on infeasibility."""
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A = _as2d(A, n)
    G = _as2d(G, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
    p, m = A.shape[0], G.shape[0]
    if b.size != p or h.size != m:
        raise ValueError("inconsistent LP dimensions")
    for arr in (c, A, b, G, h):
        if not np.all(np.isfinite(arr)):
            raise ValueError("LP data must be finite")

    x = np.zeros(n)
    y = np.zeros(p)
    z = np.ones(m)
    s = np.ones(m)
    tau = 1.0
    kappa = 1.0

    nb = max(1.0, np.linalg.norm(b))
    nh = max(1.0, np.linalg.norm(h))
    nc = max(1.0, np.linalg.norm(c))
    N = n + p + m
    v_tau = np.concatenate([c, b, h])
    rhs_tau = np.concatenate([c, -b, -h])

    K0 = np.zeros((N, N))
    K0[:n, n:n + p] = A.T
    K0[:n, n + p:] = G.T
    K0[n:n + p, :n] = A
    K0[n + p:, :n] = G
    reg_diag = np.concatenate([np.full(n, reg), np.full(p, -reg), np.zeros(m)])

    for it in range(1, max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = -A @ x + b * tau
        rz = -G @ x + h * tau - s
        rt = -c @ x - b @ y - h @ z - kappa
        mu = (s @ z + tau * kappa) / (m + 1)

        # termination tests on the de-homogenised point
        xh, yh, zh, sh = x / tau, y / tau, z / tau, s / tau
        pres = max(np.linalg.norm(A @ xh - b) / nb if p else 0.0,
                   np.linalg.norm(G @ xh + sh - h) / nh if m else 0.0)
        dres = np.linalg.norm(A.T @ yh + G.T @ zh + c) / nc
        pcost = c @ xh
        dcost = -b @ yh - h @ zh
        gap = sh @ zh
        if pres < tol and dres < tol and (gap < tol or abs(pcost - dcost) < tol * (1 + abs(pcost))):
            return LPResult(OPTIMAL, xh, yh, zh, sh, float(pcost), it)
        btyz = b @ y + h @ z
        if btyz < 0:
            scale = -btyz
            if np.linalg.norm(A.T @ y + G.T @ z) / scale < tol and kappa / tau > 1e3 * tol:
                return LPResult(INFEASIBLE, iterations=it,
                                certificate={"y": y / scale, "z": z / scale})
        ctx = c @ x
        if ctx < 0:
            scale = -ctx
            if (np.linalg.norm(A @ x) / scale < tol and np.linalg.norm(G @ x + s) / scale < tol
                    and kappa / tau > 1e3 * tol):
                return LPResult(UNBOUNDED, iterations=it, certificate={"x": x / scale})

        D = s / z
        K = K0.copy()
        K[np.arange(n + p, N), np.arange(n + p, N)] = -D
        Kreg = K + np.diag(reg_diag)
        try:
            lu = _factor(Kreg)
        except np.linalg.LinAlgError:
            return LPResult(NUMERICAL_FAILURE, iterations=it)

        def solve_K(r):
            sol = _lu_solve(lu, r)
            for _ in range(3):
                sol = sol + _lu_solve(lu, r - K @ sol)
            return sol

        u1 = solve_K(rhs_tau)

        def direction(gamma, ds, dk):
            dx_, dy_, dz_ = (-(1 - gamma) * rx, -(1 - gamma) * ry, -(1 - gamma) * rz)
            dt_ = -(1 - gamma) * rt
            r = np.concatenate([dx_, -dy_, -(dz_ + ds / z)])
            u2 = solve_K(r)
            dtau = (dt_ + dk / tau + v_tau @ u2) / (v_tau @ u1 + kappa / tau)
            u = u2 - dtau * u1
            Dx, Dy, Dz = u[:n], u[n:n + p], u[n + p:]
            Ds = (ds - s * Dz) / z
            Dk = (dk - kappa * dtau) / tau
            return Dx, Dy, Dz, dtau, Ds, Dk

        def step_len(Dz, Ds, Dt, Dk):
            a = min(_max_step(z, Dz), _max_step(s, Ds),
                    _max_step(np.array([tau]), np.array([Dt])),
                    _max_step(np.array([kappa]), np.array([Dk])))
            return a

        # predictor
        Dx, Dy, Dz, Dt, Ds, Dk = direction(0.0, -s * z, -tau * kappa)
        a_aff = min(1.0, step_len(Dz, Ds, Dt, Dk))
        sigma = (1 - a_aff) ** 3
        # corrector
        ds = -s * z - Ds * Dz + sigma * mu
        dk = -tau * kappa - Dt * Dk + sigma * mu
        Dx, Dy, Dz, Dt, Ds, Dk = direction(sigma, ds, dk)
        alpha = min(1.0, 0.99 * step_len(Dz, Ds, Dt, Dk))

        x = x + alpha * Dx
        y = y + alpha * Dy
        z = z + alpha * Dz
        s = s + alpha * Ds
        tau = tau + alpha * Dt
        kappa = kappa + alpha * Dk
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            return LPResult(NUMERICAL_FAILURE, iterations=it)
        # keep the embedding well scaled: it is homogeneous
        scl = max(tau, kappa)
        if scl > 1e6 or scl < 1e-6:
            x, y, z, s, tau, kappa = (v / scl for v in (x, y, z, s, tau, kappa))

    return LPResult(MAX_ITERATIONS, x / tau, y / tau, z / tau, s / tau,
                    float(c @ x / tau), max_iter)


def _factor(K):
    import scipy.linalg
    lu = scipy.linalg.lu_factor(K, check_finite=False)
    if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0:
        raise np.linalg.LinAlgError("singular KKT")
    return lu


def _lu_solve(lu, r):
    import scipy.linalg
    return scipy.linalg.lu_solve(lu, r, check_finite=False)
