"""Random problem instances with optimal solutions fixed in advance.

Each generator picks the primal-dual solution first and then builds data for
which that pair satisfies the optimality conditions exactly.
"""
from __future__ import annotations

import numpy as np

from .qp import QuadProgram
from .sdp import PsdBlock, SdpProblem


def random_qp(rng, n=None):
    """Strictly convex QP with a known solution, mixing active and inactive rows.

    Returns ``(prob, x_star)``.
    """
    n = int(rng.integers(2, 9)) if n is None else n
    p = int(rng.integers(0, max(1, n // 2)))
    m = int(rng.integers(1, 2 * n))
    W = rng.standard_normal((n, n))
    P = W @ W.T + 0.1 * np.eye(n)
    x = rng.standard_normal(n)
    A = rng.standard_normal((p, n))
    G = rng.standard_normal((m, n))
    active = rng.random(m) < 0.5
    slack = np.where(active, 0.0, rng.uniform(0.1, 2.0, m))
    z = np.where(active, rng.uniform(0.1, 2.0, m), 0.0)
    y = rng.standard_normal(p)
    q = -(P @ x + A.T @ y + G.T @ z)
    return QuadProgram(P, q, A, A @ x, G, G @ x + slack), x


def random_sdp(rng, block_sizes=None, nvar=None, n_ineq=None):
    """SDP with a strictly feasible primal-dual pair and a known optimum.

    Returns ``(prob, optimal_value)``. Optimal block values ``S_j`` and dual
    matrices ``Z_j`` are complementary (``S_j Z_j = 0``); a positive definite
    dual point is kept on the dual feasible affine set so that both sides
    have interior points.
    """
    block_sizes = list(rng.integers(2, 6, size=int(rng.integers(1, 4)))) if block_sizes is None else block_sizes
    dof = sum(k * (k + 1) // 2 for k in block_sizes)
    n = int(rng.integers(1, max(2, dof // 2))) if nvar is None else nvar
    m = int(rng.integers(0, 4)) if n_ineq is None else n_ineq
    x = rng.standard_normal(n)
    blocks_S, blocks_Z, blocks_D = [], [], []
    for k in block_sizes:
        Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
        r = int(rng.integers(1, k))
        blocks_Z.append(Q[:, :r] @ np.diag(rng.uniform(0.5, 2, r)) @ Q[:, :r].T)
        blocks_S.append(Q[:, r:] @ np.diag(rng.uniform(0.5, 2, k - r)) @ Q[:, r:].T)
        W = rng.standard_normal((k, k))
        blocks_D.append(W @ W.T + 0.1 * np.eye(k) - blocks_Z[-1])
    active = rng.random(m) < 0.5
    z = np.where(active, rng.uniform(0.5, 2.0, m), 0.0)
    slack = np.where(active, 0.0, rng.uniform(0.5, 2.0, m))
    z_int = z + rng.uniform(0.5, 1.0, m)
    G = rng.standard_normal((m, n))
    Fs = []
    for k in block_sizes:
        F = rng.standard_normal((n, k, k))
        Fs.append(F + F.transpose(0, 2, 1))
    # make the interior dual point (Z + D, z_int) satisfy the same stationarity
    # equations as (Z, z): project every column onto the orthogonal complement
    d = np.concatenate([np.concatenate([Dj.ravel() for Dj in blocks_D]), z - z_int])
    d /= np.linalg.norm(d)
    for i in range(n):
        col = np.concatenate([np.concatenate([F[i].ravel() for F in Fs]), G[:, i]])
        coef = col @ d
        off = 0
        for F, k in zip(Fs, block_sizes):
            F[i] -= coef * d[off:off + k * k].reshape(k, k)
            off += k * k
        G[:, i] -= coef * d[off:]
    # Gz enters stationarity with a plus sign: c = sum <F, Z> - G^T z
    c = sum(np.einsum("kij,ij->k", F, Z) for F, Z in zip(Fs, blocks_Z)) - G.T @ z
    blocks = [PsdBlock(S - np.tensordot(x, F, 1), F) for S, F in zip(blocks_S, Fs)]
    prob = SdpProblem(c, blocks, G=G, h=G @ x + slack)
    return prob, float(c @ x)
