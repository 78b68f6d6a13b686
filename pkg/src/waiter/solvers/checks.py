"""Solver-independent optimality checks.

These recompute KKT residuals straight from the problem data and a returned
point, so a solver bug cannot vouch for itself.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .qp import QuadProgram
from .sdp import SdpProblem


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def qp_kkt_residuals(prob: QuadProgram, x, y, z):
    """Residuals of the KKT conditions, ``z`` ordered as ``prob.inequality_rows()``."""
    P = _dense(prob.P)
    A = _dense(prob.Aeq)
    G, h = prob.inequality_rows()
    G = _dense(G)
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    slack = h - G @ x
    scale = 1.0 + np.abs(prob.q).max(initial=0.0)
    out = {
        "stationarity": np.abs(P @ x + prob.q + A.T @ y + G.T @ z).max(initial=0.0) / scale,
        "equality": np.abs(A @ x - prob.beq).max(initial=0.0),
        "inequality": max(0.0, -slack.min(initial=np.inf)) if slack.size else 0.0,
        "dual_sign": max(0.0, -z.min(initial=np.inf)) if z.size else 0.0,
        "complementarity": np.abs(z * slack).max(initial=0.0),
    }
    out["max"] = max(out.values())
    return out


def sdp_residuals(prob: SdpProblem, x, Z, z=None):
    """Primal/dual feasibility and duality gap for a primal point and block duals.

    The equality multipliers are recovered by least squares from stationarity,
    so they need not be supplied.
    """
    x = np.asarray(x, dtype=float)
    z = np.zeros(prob.G.shape[0]) if z is None else np.asarray(z, dtype=float)
    grad = prob.c.copy() + prob.G.T @ z
    dual_obj = -prob.h @ z
    psd_min, dual_psd_min = np.inf, np.inf
    for blk, Zj in zip(prob.blocks, Z):
        Zj = 0.5 * (Zj + Zj.T)
        grad -= np.einsum("kij,ij->k", blk.F, Zj)
        dual_obj -= np.sum(blk.F0 * Zj)
        psd_min = min(psd_min, np.linalg.eigvalsh(blk.evaluate(x))[0])
        dual_psd_min = min(dual_psd_min, np.linalg.eigvalsh(Zj)[0])
    if prob.A_eq.shape[0]:
        nu, *_ = np.linalg.lstsq(prob.A_eq.T, -grad, rcond=None)
        grad = grad + prob.A_eq.T @ nu
        dual_obj -= prob.b_eq @ nu
    slack = prob.h - prob.G @ x
    pobj = prob.c @ x
    out = {
        "equality": np.abs(prob.A_eq @ x - prob.b_eq).max(initial=0.0),
        "inequality": max(0.0, -slack.min(initial=np.inf)) if slack.size else 0.0,
        "psd": max(0.0, -psd_min) if np.isfinite(psd_min) else 0.0,
        "dual_sign": max(0.0, -z.min(initial=np.inf)) if z.size else 0.0,
        "dual_psd": max(0.0, -dual_psd_min) if np.isfinite(dual_psd_min) else 0.0,
        "stationarity": np.abs(grad).max(initial=0.0) / (1.0 + np.abs(prob.c).max(initial=0.0)),
        "gap": abs(pobj - dual_obj) / (1.0 + abs(pobj) + abs(dual_obj)),
    }
    out["max"] = max(out.values())
    return out
