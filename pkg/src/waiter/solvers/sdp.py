"""Small dense semidefinite programs by a primal-dual interior point method.

User-facing form (:class:`SdpProblem`)::

    minimize    c^T x
    subject to  A_eq x = b_eq
                G x <= h
                F0_j + sum_k x_k F_jk  is PSD,   j = 1..J

Equalities are eliminated through a null-space basis, which leaves the
linear-matrix-inequality (dual standard) form

    maximize b^T y   s.t.   S = C - sum_k y_k A_k  PSD,

paired with ``minimize <C, X>  s.t.  <A_k, X> = b_k, X PSD``. Iterates follow
the infeasible-start Mehrotra predictor-corrector scheme with Nesterov-Todd
scaling. Linear inequalities ride along as 1x1 blocks.

Everything is vectorised over a leading batch axis: :func:`solve_sdp_batch`
solves many problems that share constraints and differ only in the objective,
which is exactly the shape of the pointwise trajectory verification.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import INFEASIBLE, MAX_ITERATIONS, NUMERICAL_FAILURE, OPTIMAL, UNBOUNDED


@dataclass
class PsdBlock:
    """Affine matrix map ``F0 + sum_k x_k F[k]``."""

    F0: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        self.F0 = np.asarray(self.F0, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        n = self.F0.shape[0]
        if self.F0.shape != (n, n) or self.F.shape[1:] != (n, n):
            raise ValueError("inconsistent block shapes")

    @property
    def size(self):
        return self.F0.shape[0]

    def evaluate(self, x):
        return self.F0 + np.tensordot(x, self.F, axes=(0, 0))


@dataclass
class SdpProblem:
    c: np.ndarray
    blocks: list = field(default_factory=list)
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    G: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.asarray(self.A_eq, float).reshape(-1, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float).reshape(-1)
        self.G = np.zeros((0, n)) if self.G is None else np.asarray(self.G, float).reshape(-1, n)
        self.h = np.zeros(0) if self.h is None else np.asarray(self.h, float).reshape(-1)
        for blk in self.blocks:
            if blk.F.shape[0] != n:
                raise ValueError("block variable count does not match c")
        for arr in [self.c, self.A_eq, self.b_eq, self.G, self.h] + [
                a for blk in self.blocks for a in (blk.F0, blk.F)]:
            if not np.all(np.isfinite(arr)):
                raise ValueError("SDP data must be finite")

    @property
    def nvar(self):
        return self.c.size


@dataclass
class SdpResult:
    status: np.ndarray          # per problem, str
    x: np.ndarray               # (B, nvar)
    objective: np.ndarray       # (B,) primal objective c^T x
    dual_objective: np.ndarray  # (B,) objective of the matching dual point
    iterations: int
    Z: list = field(default_factory=list)   # dual matrix per PSD block, each (B, n, n)
    z: np.ndarray | None = None             # (B, m) multipliers of G x <= h

    def single(self):
        """Unpack a batch of one."""
        z = None if self.z is None else self.z[0]
        return SingleSdpResult(str(self.status[0]), self.x[0], float(self.objective[0]),
                               float(self.dual_objective[0]), self.iterations,
                               [Zj[0] for Zj in self.Z], z)


@dataclass
class SingleSdpResult:
    status: str
    x: np.ndarray
    objective: float
    dual_objective: float
    iterations: int
    Z: list = field(default_factory=list)
    z: np.ndarray | None = None

    @property
    def ok(self):
        return self.status == OPTIMAL


class StandardForm:
    """LMI data after eliminating equalities, with blocks grouped by size."""

    def __init__(self, prob: SdpProblem):
        n = prob.nvar
        A, b = prob.A_eq, prob.b_eq
        if A.shape[0]:
            x0, *_ = np.linalg.lstsq(A, b, rcond=None)
            self.consistent = np.linalg.norm(A @ x0 - b) <= 1e-9 * (1 + np.linalg.norm(b))
            _, sv, Vt = np.linalg.svd(A)
            rank = int(np.sum(sv > 1e-12 * max(1.0, sv.max(initial=0.0))))
            N = Vt[rank:].T
        else:
            x0 = np.zeros(n)
            self.consistent = True
            N = np.eye(n)
        self.x0, self.N = x0, N
        self.K = N.shape[1]
        groups = {}
        members_psd = []
        for blk in prob.blocks:
            C = blk.evaluate(x0)
            Ak = -np.tensordot(N.T, blk.F, axes=(1, 0))   # (K, n, n)
            groups.setdefault(blk.size, []).append((C, Ak, ("psd", len(members_psd))))
            members_psd.append(blk.size)
        if prob.G.shape[0]:
            Cl = prob.h - prob.G @ x0
            Al = prob.G @ N                                  # (m, K)
            for i in range(Cl.size):
                groups.setdefault(1, []).append((Cl[i].reshape(1, 1), Al[i].reshape(-1, 1, 1), ("lin", i)))
        self.groups = []
        self.members = []       # (kind, index) of every block in each group
        self.block_sizes = members_psd
        self.n_ineq = prob.G.shape[0]
        for size in sorted(groups):
            Cs = np.stack([g[0] for g in groups[size]])                   # (nb, n, n)
            As = np.stack([g[1] for g in groups[size]], axis=1)           # (K, nb, n, n)
            Cs = 0.5 * (Cs + np.swapaxes(Cs, -1, -2))
            As = 0.5 * (As + np.swapaxes(As, -1, -2))
            self.groups.append((Cs, As))
            self.members.append([g[2] for g in groups[size]])
        self._drop_lineality()
        self.n_total = sum(C.shape[0] * C.shape[1] for C, _ in self.groups)

    def _drop_lineality(self):
        """Remove directions of ``x`` that leave every constraint unchanged."""
        self.lineality = np.zeros((self.N.shape[0], 0))
        if not self.K or not self.groups:
            if self.K:
                self.lineality, self.N, self.K = self.N, self.N[:, :0], 0
            return
        flat = np.concatenate([A.reshape(self.K, -1) for _, A in self.groups], axis=1)
        U, sv, _ = np.linalg.svd(flat, full_matrices=True)
        rank = int(np.sum(sv > 1e-10 * max(1.0, sv.max(initial=0.0))))
        if rank == self.K:
            return
        self.lineality = self.N @ U[:, rank:]
        keep = U[:, :rank]
        self.N = self.N @ keep
        self.K = rank
        self.groups = [(C, np.tensordot(keep.T, A, axes=(1, 0))) for C, A in self.groups]

    def objective_vector(self, c):
        """Map user objectives (B, nvar) to the dual-form ``b`` (maximize) and constant."""
        c = np.atleast_2d(c)
        return -c @ self.N, c @ self.x0

    def unbounded_along_lineality(self, c):
        c = np.atleast_2d(c)
        if not self.lineality.shape[1]:
            return np.zeros(c.shape[0], dtype=bool)
        return np.linalg.norm(c @ self.lineality, axis=1) > 1e-9 * (1 + np.linalg.norm(c, axis=1))


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _inner(X, Y):
    return np.einsum("...ij,...ij->...", X, Y)


def _apply_A(groups, Xs):
    return sum(np.einsum("knij,bnij->bk", A, X) for (_, A), X in zip(groups, Xs))


def _apply_At(groups, y):
    return [np.einsum("bk,knij->bnij", y, A) for _, A in groups]


def _max_step_scaled(lam, D):
    """Largest alpha with diag(lam) + alpha * D PSD, per problem (min over blocks)."""
    if D.shape[-1] == 1:
        e = D[..., 0, 0] / lam[..., 0]
    else:
        r = 1.0 / np.sqrt(lam)
        Ms = D * r[..., :, None] * r[..., None, :]
        e = np.linalg.eigvalsh(_sym(Ms))[..., 0]    # (B, nb)
    e = e.min(axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(e < 0, -1.0 / e, np.inf)


def solve_sdp_batch(prob: SdpProblem, objectives=None, *, tol=1e-8, gap_tol=1e-8,
                    accept_tol=1e-6, max_iter=60, chunk=1024) -> SdpResult:
    """Solve ``len(objectives)`` problems sharing the constraints of ``prob``.

    ``objectives`` is ``(B, nvar)`` (minimize); defaults to ``prob.c``.
    """
    objectives = prob.c[None, :] if objectives is None else np.atleast_2d(np.asarray(objectives, float))
    sf = StandardForm(prob)
    B = objectives.shape[0]
    status = np.full(B, MAX_ITERATIONS, dtype=object)
    x = np.full((B, prob.nvar), np.nan)
    pobj = np.full(B, np.nan)
    dobj = np.full(B, np.nan)
    if not sf.consistent:
        status[:] = INFEASIBLE
        return SdpResult(status, x, pobj, dobj, 0, [], None)
    b_all, const = sf.objective_vector(objectives)
    iters = 0
    Xout = [np.zeros((B,) + C.shape) for C, _ in sf.groups]
    for start in range(0, B, chunk):
        sl = slice(start, min(B, start + chunk))
        st, y, po, do, it, Xs = _ipm(sf, b_all[sl], tol, gap_tol, max_iter, accept_tol)
        status[sl] = st
        status[sl][sf.unbounded_along_lineality(objectives[sl])] = UNBOUNDED
        x[sl] = sf.x0 + y @ sf.N.T
        # user objective is c^T x = -(b^T y) + const for the dual-form point
        pobj[sl] = -do + const[sl]
        dobj[sl] = -po + const[sl]
        for g, X in enumerate(Xs):
            Xout[g][sl] = X
        iters = max(iters, it)
    Z = [np.zeros((B, n, n)) for n in sf.block_sizes]
    z = np.zeros((B, sf.n_ineq))
    for g, mem in enumerate(sf.members):
        for pos, (kind, i) in enumerate(mem):
            if kind == "psd":
                Z[i] = Xout[g][:, pos]
            else:
                z[:, i] = Xout[g][:, pos, 0, 0]
    return SdpResult(status, x, pobj, dobj, iters, Z, z)


def solve_sdp(prob: SdpProblem, **kw) -> SingleSdpResult:
    return solve_sdp_batch(prob, None, **kw).single()


def _ipm(sf: StandardForm, b, tol, gap_tol, max_iter, accept_tol):
    groups = sf.groups
    B, K = b.shape
    n_total = sf.n_total
    normC = np.sqrt(sum(np.sum(C**2) for C, _ in groups))
    normA = np.sqrt(sum(np.sum(A**2, axis=(1, 2, 3)) for _, A in groups)) if K else np.zeros(0)
    nb_vec = 1.0 + np.linalg.norm(b, axis=1)

    # starting point in the spirit of SDPT3
    n_max = max(C.shape[-1] for C, _ in groups)
    if K:
        zx = np.maximum(10.0, np.maximum(np.sqrt(n_max), n_max * np.max((1 + np.abs(b)) / (1 + normA), axis=1)))
        zs = max(10.0, np.sqrt(n_max), float(normA.max()), float(normC))
    else:
        zx = np.full(B, 10.0)
        zs = max(10.0, float(normC))
    Xs = [np.broadcast_to(np.eye(C.shape[-1]), (B,) + C.shape) * zx[:, None, None, None] for C, _ in groups]
    Ss = [np.broadcast_to(np.eye(C.shape[-1]), (B,) + C.shape) * zs for C, _ in groups]
    Xs = [X.copy() for X in Xs]
    Ss = [S.copy() for S in Ss]
    y = np.zeros((B, K))

    status = np.full(B, MAX_ITERATIONS, dtype=object)
    active = np.ones(B, dtype=bool)
    # rounding eventually pushes the residuals back up once mu is tiny; keep
    # the best iterate seen so that a stalled run can still report it
    best_err = np.full(B, np.inf)
    best_y = y.copy()
    best_X = [X.copy() for X in Xs]
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        X = [Xg[idx] for Xg in Xs]
        S = [Sg[idx] for Sg in Ss]
        yy = y[idx]
        bb = b[idx]
        AtY = _apply_At(groups, yy)
        Rd = [C[None] - Sg - Aty for (C, _), Sg, Aty in zip(groups, S, AtY)]
        rp = bb - _apply_A(groups, X) if K else np.zeros((idx.size, 0))
        po = sum(_inner(C[None], Xg).sum(-1) for (C, _), Xg in zip(groups, X))
        do = np.einsum("bk,bk->b", bb, yy)
        relp = np.linalg.norm(rp, axis=1) / nb_vec[idx]
        reld = np.sqrt(sum(np.sum(R**2, axis=(1, 2, 3)) for R in Rd)) / (1.0 + normC)
        relgap = np.abs(po - do) / (1.0 + np.abs(po) + np.abs(do))
        err = np.maximum(np.maximum(relp, reld), relgap)
        better = err < best_err[idx]
        if np.any(better):
            bi = idx[better]
            best_err[bi] = err[better]
            best_y[bi] = yy[better]
            for g in range(len(groups)):
                best_X[g][bi] = X[g][better]
        done = (relp < tol) & (reld < tol) & (relgap < gap_tol)
        # stall: residuals have blown up well past the best point already seen
        stall = (err > 1e3 * best_err[idx]) & (best_err[idx] < accept_tol)
        active[idx[stall & ~done]] = False
        # infeasibility certificates
        with np.errstate(over="ignore", divide="ignore"):
            unb, inf = _certificates(groups, K, AtY, S, X, po, do, nb_vec[idx], normC)
        for flag, name in ((done, OPTIMAL), (unb, UNBOUNDED), (inf, INFEASIBLE)):
            hit = idx[flag & active[idx]]
            status[hit] = name
            active[hit] = False
        keep = active[idx]
        if not np.any(keep):
            break
        idx = idx[keep]
        X = [Xg[keep] for Xg in X]
        S = [Sg[keep] for Sg in S]
        Rd = [R[keep] for R in Rd]
        rp = rp[keep]
        yy = yy[keep]

        try:
            Lx = [np.linalg.cholesky(Xg) for Xg in X]
            Ls = [np.linalg.cholesky(Sg) for Sg in S]
        except np.linalg.LinAlgError:
            bad = _cholesky_failures(X, S)
            status[idx[bad]] = NUMERICAL_FAILURE
            active[idx[bad]] = False
            continue
        Gs, lams = [], []
        for lx, ls, Xg, Sg in zip(Lx, Ls, X, S):
            if Xg.shape[-1] == 1:
                # linear rows: scaling is a scalar per row
                Gs.append((Xg / Sg) ** 0.25)
                lams.append(np.sqrt(Xg * Sg)[..., 0])
                continue
            U, d, Vt = np.linalg.svd(np.swapaxes(ls, -1, -2) @ lx)
            G = lx @ np.swapaxes(Vt, -1, -2) / np.sqrt(d)[..., None, :]
            Gs.append(G)
            lams.append(d)
        mu = sum(np.sum(l**2, axis=(1, 2)) for l in lams) / n_total
        nB = idx.size

        # scaled constraint matrices G^T A_k G, flattened to (B, K, dim)
        flat = np.concatenate([_congruence_flat(G, A) for G, (_, A) in zip(Gs, groups)], axis=2) if K else None
        if K:
            M = flat @ np.swapaxes(flat, 1, 2)
            Minv = _schur_inverse(M, flat)
        Rds = [np.swapaxes(G, -1, -2) @ R @ G for G, R in zip(Gs, Rd)]
        shapes = [R.shape for R in Rds]
        sizes = [int(np.prod(sh[1:])) for sh in shapes]

        def unflat(v):
            out, o = [], 0
            for sh, sz in zip(shapes, sizes):
                out.append(v[:, o:o + sz].reshape(sh))
                o += sz
            return out

        Rd_flat = np.concatenate([R.reshape(nB, -1) for R in Rds], axis=1)

        def direction(Zs):
            Zf = np.concatenate([Z.reshape(nB, -1) for Z in Zs], axis=1)
            if K:
                rhs = rp - np.einsum("bkd,bd->bk", flat, Zf - Rd_flat)
                dy = np.einsum("bij,bj->bi", Minv, rhs)
                # refinement keeps A(dX) = rp accurate as the scaling degrades
                res = rhs - np.einsum("bij,bj->bi", M, dy)
                for _ in range(3):
                    cand = dy + np.einsum("bij,bj->bi", Minv, res)
                    res_c = rhs - np.einsum("bij,bj->bi", M, cand)
                    ok = np.linalg.norm(res_c, axis=1) < np.linalg.norm(res, axis=1)
                    dy = np.where(ok[:, None], cand, dy)
                    res = np.where(ok[:, None], res_c, res)
                dSf = Rd_flat - np.einsum("bk,bkd->bd", dy, flat)
            else:
                dy = np.zeros((nB, 0))
                dSf = Rd_flat
            dS = unflat(dSf)
            dX = unflat(Zf - dSf)
            return dy, dX, dS

        def steps(dX, dS):
            ap = np.min(np.stack([_max_step_scaled(l, d) for l, d in zip(lams, dX)]), axis=0)
            ad = np.min(np.stack([_max_step_scaled(l, d) for l, d in zip(lams, dS)]), axis=0)
            return ap, ad

        Zaff = [-_diag(l) for l in lams]
        dy, dX, dS = direction(Zaff)
        ap, ad = steps(dX, dS)
        ap = np.minimum(1.0, ap)
        ad = np.minimum(1.0, ad)
        mu_aff = sum(_inner(_diag(l) + ap[:, None, None, None] * dx_, _diag(l) + ad[:, None, None, None] * ds_).sum(-1)
                     for l, dx_, ds_ in zip(lams, dX, dS)) / n_total
        sigma = np.clip((mu_aff / mu) ** 3, 0.0, 1.0)
        Zc = []
        for l, dx_, ds_ in zip(lams, dX, dS):
            n = l.shape[-1]
            T = sigma[:, None, None, None] * mu[:, None, None, None] * np.eye(n) - _diag(l**2) - _sym(dx_ @ ds_)
            Zc.append(2.0 * T / (l[..., :, None] + l[..., None, :]))
        dy, dX, dS = direction(Zc)
        ap, ad = steps(dX, dS)
        gamma = 0.98
        ap = np.minimum(1.0, gamma * ap)
        ad = np.minimum(1.0, gamma * ad)

        for g, (G, dx_) in enumerate(zip(Gs, dX)):
            Xs[g][idx] = _sym(X[g] + ap[:, None, None, None] * (G @ dx_ @ np.swapaxes(G, -1, -2)))
        y[idx] = yy + ad[:, None] * dy
        AtdY = _apply_At(groups, dy)
        for g in range(len(groups)):
            dSg = Rd[g] - AtdY[g]
            Ss[g][idx] = _sym(S[g] + ad[:, None, None, None] * dSg)
        bad = ~np.isfinite(y[idx]).all(axis=1)
        if np.any(bad):
            status[idx[bad]] = NUMERICAL_FAILURE
            active[idx[bad]] = False

    stalled = (status == MAX_ITERATIONS) | (status == NUMERICAL_FAILURE)
    rescue = stalled & (best_err < accept_tol)
    status[rescue] = OPTIMAL
    use_best = rescue | stalled
    y[use_best] = best_y[use_best]
    for g in range(len(groups)):
        Xs[g][use_best] = best_X[g][use_best]
    po = sum(_inner(C[None], Xg).sum(-1) for (C, _), Xg in zip(groups, Xs))
    do = np.einsum("bk,bk->b", b, y)
    return status, y, po, do, it, Xs


def _certificates(groups, K, AtY, S, X, po, do, nb, normC):
    """Flag iterates that have turned into infeasibility rays.

    Dual-form ray: ``b^T y`` huge while ``A^* y + S`` stays bounded, i.e. the
    user problem is unbounded below. Primal ray: ``<C, X>`` hugely negative
    with ``A(X)`` bounded, i.e. no point satisfies the matrix inequalities.
    """
    AtYnorm = np.sqrt(sum(np.sum((Aty + Sg) ** 2, axis=(1, 2, 3)) for Aty, Sg in zip(AtY, S)))
    unb = (do > 1e6 * nb) & (AtYnorm / np.maximum(do, 1e-300) < 1e-8)
    AXnorm = np.linalg.norm(_apply_A(groups, X), axis=1) if K else np.zeros(po.size)
    inf = (-po > 1e6 * (1 + normC)) & (AXnorm / np.maximum(-po, 1e-300) < 1e-8)
    return unb, inf


def _congruence_flat(G, A):
    """``G_b^T A_k G_b`` for every problem ``b`` and constraint ``k``, as ``(B, K, nb * n * n)``."""
    B, nb, n, _ = G.shape
    K = A.shape[0]
    if n == 1:
        return (A[None, :, :, 0, 0] * (G[:, None, :, 0, 0] ** 2)).reshape(B, K, nb)
    # A_k G for all k in one batched product, then G^T from the left
    A_stack = np.swapaxes(A, 0, 1).reshape(nb, K * n, n)
    T = (A_stack[None] @ G).reshape(B, nb, K, n, n)
    T = np.swapaxes(T, 2, 3).reshape(B, nb, n, K * n)
    out = (np.swapaxes(G, -1, -2) @ T).reshape(B, nb, n, K, n)
    return np.transpose(out, (0, 3, 1, 2, 4)).reshape(B, K, nb * n * n)


def _schur_inverse(M, flat):
    """Inverse of the Schur matrix: Cholesky when it is well conditioned, QR otherwise.

    The QR route factors the stacked scaled matrices directly, since forming
    ``A A^T`` squares the conditioning.
    """
    K = M.shape[-1]
    try:
        L = np.linalg.cholesky(M)
        dL = np.diagonal(L, axis1=1, axis2=2)
        if np.min(dL) > 1e-6 * np.max(dL):
            Li = np.linalg.inv(L)
            return np.swapaxes(Li, 1, 2) @ Li
    except np.linalg.LinAlgError:
        pass
    if flat.shape[2] >= K:
        Rq = np.linalg.qr(np.swapaxes(flat, 1, 2), mode="r")
        dR = np.diagonal(Rq, axis1=1, axis2=2)
        Rq = Rq + _diag(np.where(np.abs(dR) < 1e-14, 1e-14, 0.0))
        Rinv = np.linalg.inv(Rq)
        return Rinv @ np.swapaxes(Rinv, 1, 2)
    return np.linalg.pinv(M)


def _diag(l):
    return l[..., :, None] * np.eye(l.shape[-1])


def _cholesky_failures(X, S):
    bad = np.zeros(X[0].shape[0], dtype=bool)
    for arrs in (X, S):
        for A in arrs:
            for i in range(A.shape[0]):
                if bad[i]:
                    continue
                try:
                    np.linalg.cholesky(A[i])
                except np.linalg.LinAlgError:
                    bad[i] = True
    return bad
