"""Object-on-tray contact simulation and the success-rate sweep.

The tray follows a planned trajectory kinematically. The object is a free
rigid body touching the tray at the four corners of its base; each step
solves velocity-level contact impulses (normal >= 0, tangential inside the
Coulomb disk) by block projected Gauss-Seidel (one 3x3 solve per corner,
then projection), with Baumgarte stabilisation of
penetration, then integrates semi-implicitly.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.spatial.transform import Rotation

from .contact import ComBox
from .errors import InfeasibleCom, PenetrationBlowup
from .moments.relaxation import is_realizable
from .moments.shape import BoundingShape
from .rigidbody import GRAVITY, InertialParams, point_mass_inertia
from .solvers import lp as _lp
from .trajopt import Trajectory

DROP_DISPLACEMENT = 0.05


@dataclass(frozen=True)
class SimObject:
    """Cuboid object standing on the tray; its base centre starts at the tray origin.

    ``params`` hold the true inertial parameters in the object frame (origin at the
    base centre, z up).
    """

    params: InertialParams
    dims: tuple
    mu: float = 0.2
    check_realizable: bool = True

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError("dims must be three positive side lengths")
        object.__setattr__(self, "dims", dims)
        if self.params.mass <= 0:
            raise ValueError("object mass must be positive")
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        if self.check_realizable and not is_realizable(self.params, self.shape):
            raise ValueError("inertial parameters are not realizable on the object geometry")

    @property
    def shape(self) -> BoundingShape:
        a, b, h = self.dims
        return BoundingShape.box([-a / 2, -b / 2, 0.0], [a / 2, b / 2, h])

    @property
    def base_corners(self):
        a, b, _ = self.dims
        return np.array([[sx * a / 2, sy * b / 2, 0.0] for sx in (-1, 1) for sy in (-1, 1)])


@dataclass
class SimResult:
    times: np.ndarray
    positions: np.ndarray        # (n, 3) object CoM, world frame
    rotations: np.ndarray        # (n, 3) object rotation vectors, world frame
    displacement: np.ndarray     # (n,) running max of CoM displacement relative to the tray
    max_displacement: float
    success: bool
    complementarity: float       # worst per-step complementarity residual
    friction_excess: float       # worst |lambda_t| - mu lambda_n
    min_normal: float
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)


# --- tray kinematics ----------------------------------------------------------

def tray_motion(traj: Trajectory, sim_dt):
    """Tray pose and velocity at ``sim_dt`` resolution: ``(t, p, R, v, omega)``."""
    n_sub = int(round(traj.dt / sim_dt))
    if abs(n_sub * sim_dt - traj.dt) > 1e-9 * traj.dt:
        raise ValueError("sim_dt must divide the trajectory step")
    tau = np.arange(n_sub) * sim_dt
    X, U = traj.states[:-1], traj.inputs
    N = traj.N
    tt = tau[None, :, None]
    x = X[:, None, :]
    ul, ua = U[:, None, :3], U[:, None, 3:]
    p = x[..., 0:3] + x[..., 6:9] * tt + x[..., 12:15] * tt**2 / 2 + ul * tt**3 / 6
    v = x[..., 6:9] + x[..., 12:15] * tt + ul * tt**2 / 2
    w = x[..., 9:12] + x[..., 15:18] * tt + ua * tt**2 / 2
    delta = x[..., 9:12] * tt + x[..., 15:18] * tt**2 / 2 + ua * tt**3 / 6
    R0 = Rotation.from_rotvec(np.repeat(X[:, 3:6], n_sub, axis=0))
    R = (Rotation.from_rotvec(delta.reshape(-1, 3)) * R0).as_matrix()
    t = (np.arange(N)[:, None] * traj.dt + tau[None]).reshape(-1)
    last = traj.states[-1]
    t = np.append(t, N * traj.dt)
    p = np.vstack([p.reshape(-1, 3), last[0:3]])
    v = np.vstack([v.reshape(-1, 3), last[6:9]])
    w = np.vstack([w.reshape(-1, 3), last[9:12]])
    R = np.concatenate([R, Rotation.from_rotvec(last[3:6]).as_matrix()[None]])
    return t, p, R, v, w


# --- kernel -------------------------------------------------------------------

@numba.njit(cache=True)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


@numba.njit(cache=True)
def _skew(a):
    return np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])


@numba.njit(cache=True)
def _expm(phi):
    th = np.sqrt(phi @ phi)
    K = _skew(phi)
    if th < 1e-12:
        return np.eye(3) + K
    return np.eye(3) + np.sin(th) / th * K + (1 - np.cos(th)) / th**2 * (K @ K)


@numba.njit(cache=True)
def _orthonormalize(R):
    # one Newton step towards the closest rotation
    return 1.5 * R - 0.5 * R @ R.T @ R


@numba.njit(cache=True)
def _kernel(tp, tR, tv, tw, x0, R0, v0, w0, mass, I_body, corners_c, com, mu, g, dt, beta, max_iter, tol, drop, sor):
    n = tp.shape[0]
    nc = corners_c.shape[0]
    xs = np.empty((n, 3))
    Rs = np.empty((n, 3, 3))
    x = x0.copy()
    R = R0.copy()
    u = np.empty(6)                    # [v, w] of the object
    u[:3] = v0
    u[3:] = w0
    lam = np.zeros((nc, 3))            # accumulated [t1, t2, n] impulses, warm-started
    J = np.zeros((nc, 3, 6))           # contact-space velocity rows
    MJ = np.zeros((nc, 3, 6))          # velocity change per unit impulse
    off = np.zeros((nc, 3))            # tray velocity (and bias) per contact direction
    Kd = np.zeros((nc, 3, 3))          # contact-space inverse inertia
    Kinv = np.zeros((nc, 3, 3))
    I_inv_body = np.linalg.inv(I_body)
    E = np.zeros((3, 3))
    worst_comp = 0.0
    worst_fric = 0.0
    min_normal = 0.0
    blown = -1
    stop = n
    xs[0] = x
    Rs[0] = R
    for k in range(n - 1):
        Iw = R @ I_body @ R.T
        Iw_inv = R @ I_inv_body @ R.T
        w = u[3:].copy()
        u[:3] += g * dt
        u[3:] -= Iw_inv @ _cross(w, Iw @ w) * dt
        Rt = tR[k + 1]
        pt = tp[k + 1]
        for d in range(3):
            E[d] = Rt[:, d]            # t1, t2, n
        for i in range(nc):
            r = R @ corners_c[i]
            rel = x + r - pt
            gap = E[2] @ rel
            # tray point velocity over the step (position-consistent, so sticking leaves no drift)
            vt_pt = (rel - tR[k] @ (Rt.T @ rel) + pt - tp[k]) / dt
            for d in range(3):
                e = E[d]
                rxe = _cross(r, e)
                J[i, d, :3] = e
                J[i, d, 3:] = rxe
                MJ[i, d, :3] = e / mass
                MJ[i, d, 3:] = Iw_inv @ rxe
                off[i, d] = -(vt_pt @ e)
            off[i, 2] += gap / dt if gap > 0 else beta * gap / dt
            for a in range(3):
                for b in range(3):
                    Kd[i, a, b] = J[i, a] @ MJ[i, b]
        # warm start
        for i in range(nc):
            for d in range(3):
                u += lam[i, d] * MJ[i, d]
        for i in range(nc):
            Kinv[i] = np.linalg.inv(Kd[i])
        for it in range(max_iter):
            change = 0.0
            for i in range(nc):
                # 3x3 block step on [t1, t2, n], then projection onto the friction cone
                vc = np.empty(3)
                for d in range(3):
                    vc[d] = J[i, d] @ u + off[i, d]
                trial = lam[i] - sor * (Kinv[i] @ vc)
                ln = trial[2]
                if ln <= 0.0:
                    new = np.zeros(3)
                else:
                    new = trial.copy()
                    nt = np.sqrt(trial[0] ** 2 + trial[1] ** 2)
                    if nt > mu * ln:
                        # sliding: keep the tangential direction, re-solve the normal row
                        ln = max(lam[i, 2] - vc[2] / Kd[i, 2, 2], 0.0)
                        sc = mu * ln / nt if nt > 0 else 0.0
                        new[0] = trial[0] * sc
                        new[1] = trial[1] * sc
                        new[2] = ln
                dl = new - lam[i]
                lam[i] = new
                for d in range(3):
                    u += dl[d] * MJ[i, d]
                change = max(change, np.abs(dl).max())
            if change < tol:
                break
        for i in range(nc):
            vn = J[i, 2] @ u + off[i, 2]
            worst_comp = max(worst_comp, abs(lam[i, 2] * vn))
            worst_fric = max(worst_fric, np.sqrt(lam[i, 0] ** 2 + lam[i, 1] ** 2) - mu * lam[i, 2])
            min_normal = min(min_normal, lam[i, 2])
        x = x + u[:3] * dt
        R = _orthonormalize(_expm(u[3:] * dt) @ R)
        xs[k + 1] = x
        Rs[k + 1] = R
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))) or np.abs(x - tp[k + 1]).max() > 10.0:
            blown = k + 1
            break
        # dropped: no need to follow the object any further
        rel = Rt.T @ (x - pt) - com
        if np.sqrt(rel @ rel) > drop:
            stop = k + 2
            break
    return xs[:stop], Rs[:stop], worst_comp, worst_fric, min_normal, blown


def simulate_transport(traj: Trajectory, obj: SimObject, sim_dt=1e-3, *, beta=0.2, pgs_iters=100,
                       pgs_tol=1e-8, sor=1.0, tray=None, gravity=GRAVITY) -> SimResult:
    """Simulate the object while the tray follows ``traj``.

    ``tray`` may carry precomputed :func:`tray_motion` output for the same ``sim_dt``.
    """
    if not 0 < sim_dt <= 1e-3:
        raise ValueError("sim_dt must be in (0, 1 ms]")
    t0 = time.perf_counter()
    t, tp, tR, tv, tw = tray if tray is not None else tray_motion(traj, sim_dt)
    prm = obj.params
    m = prm.mass
    c = prm.com
    I_c = prm.inertia_com
    corners_c = obj.base_corners - c
    # object starts at rest relative to the tray, base centre on the tray origin
    R0 = tR[0].copy()
    x0 = tp[0] + R0 @ c
    v0 = tv[0] + np.cross(tw[0], R0 @ c)
    w0 = tw[0].copy()
    xs, Rs, comp, fric, min_n, blown = _kernel(
        tp, tR, tv, tw, x0, R0, v0, w0, float(m), I_c, corners_c, c, float(obj.mu),
        np.asarray(gravity, dtype=float), float(sim_dt), float(beta), int(pgs_iters), float(pgs_tol),
        DROP_DISPLACEMENT, float(sor))
    if blown >= 0:
        raise PenetrationBlowup("object integration diverged", float(t[blown]))
    # CoM in the tray frame, compared with its initial placement
    n = xs.shape[0]
    t, tp, tR = t[:n], tp[:n], tR[:n]
    rel = np.einsum("nji,nj->ni", tR, xs - tp)
    disp = np.linalg.norm(rel - c, axis=1)
    run_max = np.maximum.accumulate(disp)
    max_disp = float(run_max[-1])
    # the run stops early once the CoM has moved past the drop threshold
    success = max_disp < DROP_DISPLACEMENT
    rotvec = Rotation.from_matrix(Rs).as_rotvec()
    return SimResult(t, xs, rotvec, run_max, max_disp, bool(success), float(comp), float(fric), float(min_n),
                     time.perf_counter() - t0)


# --- experiment helpers -----------------------------------------------------------

def _vertices(shape):
    if isinstance(shape, BoundingShape):
        lo, hi = shape.lo, shape.hi
        return np.array([[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]]
                         for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    if isinstance(shape, ComBox):
        return shape.vertices
    return np.atleast_2d(np.asarray(shape, dtype=float))


def max_inertia_params(shape, com, mass=1.0) -> InertialParams:
    """Point masses on the vertices of ``shape`` with CoM ``com`` whose inertia about
    the CoM is diagonal with the largest possible smallest eigenvalue (an LP)."""
    V = _vertices(shape)
    com = np.asarray(com, dtype=float)
    n = V.shape[0]
    if n == 1:
        if np.linalg.norm(V[0] - com) > 1e-9:
            raise InfeasibleCom("CoM must coincide with the single point")
        return InertialParams.from_mci(mass, com, np.zeros((3, 3)))
    D = V - com
    # inertia entries about the CoM, linear in the weights
    Ij = np.array([point_mass_inertia(1.0, d) for d in D])        # (n, 3, 3)
    # variables [w (n), t]; maximise t
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A = [np.concatenate([np.ones(n), [0.0]])]
    b = [1.0]
    for k in range(3):
        A.append(np.concatenate([D[:, k], [0.0]]))
        b.append(0.0)
    for (i, j) in ((0, 1), (0, 2), (1, 2)):
        A.append(np.concatenate([Ij[:, i, j], [0.0]]))
        b.append(0.0)
    G = [np.concatenate([-Ij[:, k, k], [1.0]]) for k in range(3)]
    G += list(np.hstack([-np.eye(n), np.zeros((n, 1))]))
    h = np.zeros(len(G))
    res = _lp.solve_lp(c, A=np.array(A), b=np.array(b), G=np.array(G), h=h)
    if res.status == _lp.INFEASIBLE:
        raise InfeasibleCom("CoM cannot be produced by masses on the shape's vertices")
    if not res.ok:
        raise RuntimeError(f"inertia LP failed: {res.status}")
    wts = np.maximum(res.x[:n], 0.0)
    I = np.einsum("n,nij->ij", wts, Ij)
    I = np.diag(np.diag(I))
    return InertialParams.from_mci(mass, com, I)


def sweep_coms(com_box: ComBox):
    """Centre, the 8 vertices and the 6 face centres of the CoM box (15 points)."""
    lo, hi = com_box.vertices.min(axis=0), com_box.vertices.max(axis=0)
    mid = 0.5 * (lo + hi)
    pts = [mid]
    pts += [np.array([(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]]) for i in (0, 1) for j in (0, 1) for k in (0, 1)]
    for ax in range(3):
        for val in (lo[ax], hi[ax]):
            p = mid.copy()
            p[ax] = val
            pts.append(p)
    return np.array(pts)


def sweep_objects(dims, com_box: ComBox, scales=(1.0, 0.5, 0.1), mu=0.2):
    """Simulated objects for every (CoM, inertia scale) pair: ``[(com_index, scale, SimObject)]``."""
    a, b, h = dims
    shape = BoundingShape.box([-a / 2, -b / 2, 0.0], [a / 2, b / 2, h])
    out = []
    for ci, com in enumerate(sweep_coms(com_box)):
        base = max_inertia_params(shape, com)
        for s in scales:
            prm = InertialParams.from_mci(1.0, com, s * base.inertia_com)
            out.append((ci, s, SimObject(prm, dims, mu)))
    return out


@dataclass
class SweepRow:
    method: str
    height: float
    goal: int
    com_index: int
    inertia_scale: float
    success: bool
    max_displacement: float


def sweep(heights, methods, goals, plan_fn, *, dims_fn, com_box_fn, scales=(1.0, 0.5, 0.1), mu_sim=0.2,
          sim_dt=1e-3, log=None):
    """Plan once per (height, method, goal) and simulate every (CoM, inertia) case.

    ``plan_fn(height, method, goal) -> Trajectory``; failures are recorded as
    unsuccessful rows and the sweep continues.
    """
    rows = []
    for h in heights:
        objs = sweep_objects(dims_fn(h), com_box_fn(h), scales, mu_sim)
        for method in methods:
            for gi, goal in enumerate(goals):
                try:
                    traj = plan_fn(h, method, goal)
                    tray = tray_motion(traj, sim_dt)
                except Exception as exc:          # recorded, sweep continues
                    if log:
                        log(f"plan failed h={h} {method} goal={gi}: {exc}")
                    rows += [SweepRow(method, h, gi, ci, s, False, np.nan) for ci, s, _ in objs]
                    continue
                for ci, s, obj in objs:
                    try:
                        res = simulate_transport(traj, obj, sim_dt, tray=tray)
                        rows.append(SweepRow(method, h, gi, ci, s, res.success, res.max_displacement))
                    except PenetrationBlowup as exc:
                        if log:
                            log(f"simulation failed h={h} {method} goal={gi} com={ci} scale={s}: {exc}")
                        rows.append(SweepRow(method, h, gi, ci, s, False, np.nan))
                if log:
                    sel = [r for r in rows if r.method == method and r.height == h and r.goal == gi]
                    log(f"h={h:.2f} {method:6s} goal={gi}: {sum(r.success for r in sel)}/{len(sel)} succeeded")
    return rows


def success_table(rows):
    """``{(method, height): success rate}``."""
    out = {}
    for r in rows:
        out.setdefault((r.method, r.height), []).append(r.success)
    return {k: float(np.mean(v)) for k, v in out.items()}


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "height", "goal", "com_index", "inertia_scale", "success", "max_displacement"])
        for r in rows:
            w.writerow([r.method, f"{r.height:g}", r.goal, r.com_index, f"{r.inertia_scale:g}", int(r.success),
                        f"{r.max_displacement:.6g}"])


def read_sweep_csv(path):
    rows = []
    with open(path) as f:
        for d in csv.DictReader(f):
            rows.append(SweepRow(d["method"], float(d["height"]), int(d["goal"]), int(d["com_index"]),
                                 float(d["inertia_scale"]), bool(int(d["success"])), float(d["max_displacement"])))
    return rows
