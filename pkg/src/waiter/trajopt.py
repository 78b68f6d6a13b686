"""Tray trajectory optimisation with soft (robust) sticking constraints.

The robot is reduced to a free-flying tray whose pose ``q = [p, phi]``
(position, rotation vector) follows a triple integrator driven by jerk:
``x = [p, phi, v, omega, a, alpha]`` with world-frame ``v, omega, a, alpha``.
The planner assumes zero friction, so each vertex object's gravito-inertial
wrench must be produced by non-negative normal forces alone; this equality is
softened with an L2 penalty and the whole problem is solved by Gauss-Newton SQP.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial.transform import Rotation

from .contact import ContactSet, UniformCuboidInertia, robust_vertex_params, ComBox
from .errors import SolverFailure
from .rigidbody import GRAVITY, InertialParams, adjoint, adjoint_transpose_map, skew, spatial_mass_matrix
from .solvers import qp as _qp

NX, NU = 18, 6
P_, PHI, V_, W_, A_, AL = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15), slice(15, 18))


# --- rotations ---------------------------------------------------------------

def rot_exp(phi):
    return Rotation.from_rotvec(np.asarray(phi, dtype=float)).as_matrix()


def rot_log(R):
    return Rotation.from_matrix(R).as_rotvec()


def left_jacobian(phi):
    """``J_l(phi)``: ``exp(phi + d) ~ exp(J_l d) exp(phi)``."""
    phi = np.asarray(phi, dtype=float)
    th = np.linalg.norm(phi)
    K = skew(phi)
    if th < 1e-6:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    return (np.eye(3) + (1 - np.cos(th)) / th**2 * K
            + (th - np.sin(th)) / th**3 * K @ K)


def left_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    th = np.linalg.norm(phi)
    K = skew(phi)
    if th < 1e-6:
        return np.eye(3) - 0.5 * K + K @ K / 12.0
    c = (1.0 / th**2) * (1 - th * np.sin(th) / (2 * (1 - np.cos(th))))
    return np.eye(3) - 0.5 * K + c * K @ K


# --- state --------------------------------------------------------------------

@dataclass(frozen=True)
class TrayState:
    q: np.ndarray
    nu: np.ndarray
    nudot: np.ndarray

    def __post_init__(self):
        for name in ("q", "nu", "nudot"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(6)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if np.linalg.norm(self.q[3:]) >= np.pi:
            # re-wrap onto the principal branch
            object.__setattr__(self, "q", np.concatenate([self.q[:3], rot_log(rot_exp(self.q[3:]))]))

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[:6], x[6:12], x[12:18])

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0)):
        return cls(np.concatenate([position, np.zeros(3)]), np.zeros(6), np.zeros(6))

    @property
    def vector(self):
        return np.concatenate([self.q, self.nu, self.nudot])

    @property
    def rotation(self):
        return rot_exp(self.q[3:])


def _step_vec(x, u, dt):
    """Triple-integrator update on a state vector; returns the new vector."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    y = np.empty(NX)
    ul, ua = u[:3], u[3:]
    y[P_] = x[P_] + x[V_] * dt + x[A_] * dt**2 / 2 + ul * dt**3 / 6
    y[V_] = x[V_] + x[A_] * dt + ul * dt**2 / 2
    y[A_] = x[A_] + ul * dt
    y[W_] = x[W_] + x[AL] * dt + ua * dt**2 / 2
    y[AL] = x[AL] + ua * dt
    delta = x[W_] * dt + x[AL] * dt**2 / 2 + ua * dt**3 / 6
    y[PHI] = rot_log(rot_exp(delta) @ rot_exp(x[PHI]))
    return y


def model_step(x: TrayState, u, dt) -> TrayState:
    """Exact triple-integrator update; orientation composed as ``exp(delta) R``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return TrayState.from_vector(_step_vec(x.vector, u, dt))


def model_jacobians(x, u, dt):
    """``(A, B)`` of the discrete model at the state vector ``x`` and input ``u``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    A = np.eye(NX)
    B = np.zeros((NX, NU))
    I3 = np.eye(3)
    for pos, vel, acc, uc in ((P_, V_, A_, slice(0, 3)),):
        A[pos, vel] = I3 * dt
        A[pos, acc] = I3 * dt**2 / 2
        A[vel, acc] = I3 * dt
        B[pos, uc] = I3 * dt**3 / 6
        B[vel, uc] = I3 * dt**2 / 2
        B[acc, uc] = I3 * dt
    A[W_, AL] = I3 * dt
    B[W_, 3:] = I3 * dt**2 / 2
    B[AL, 3:] = I3 * dt
    phi = x[PHI]
    delta = x[W_] * dt + x[AL] * dt**2 / 2 + u[3:] * dt**3 / 6
    Rd = rot_exp(delta)
    phi_next = rot_log(Rd @ rot_exp(phi))
    Jinv = left_jacobian_inv(phi_next)
    A[PHI, PHI] = Jinv @ Rd @ left_jacobian(phi)
    D = Jinv @ left_jacobian(delta)
    A[PHI, W_] = D * dt
    A[PHI, AL] = D * dt**2 / 2
    B[PHI, 3:] = D * dt**3 / 6
    return A, B


# --- end-effector motion --------------------------------------------------------

def _ee_from_vec(x, gravity):
    R = rot_exp(x[PHI])
    w, v, a, al = x[W_], x[V_], x[A_], x[AL]
    xi = np.concatenate([R.T @ w, R.T @ v])
    eta = np.concatenate([R.T @ al, R.T @ (a - np.cross(w, v) - gravity)])
    return xi, eta


def ee_motion(x: TrayState, gravity=GRAVITY):
    """``(xi, eta)`` in the tray frame; ``eta`` linear part is ``v_dot - g``."""
    return _ee_from_vec(x.vector, np.asarray(gravity, dtype=float))


def ee_motion_jacobian(x, gravity=GRAVITY):
    """``xi, eta`` and their Jacobians (6 x 18) with respect to the state vector."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(gravity, dtype=float)
    R = rot_exp(x[PHI])
    Jl = left_jacobian(x[PHI])
    w, v, a, al = x[W_], x[V_], x[A_], x[AL]
    z = a - np.cross(w, v) - g
    xi = np.concatenate([R.T @ w, R.T @ v])
    eta = np.concatenate([R.T @ al, R.T @ z])
    dxi = np.zeros((6, NX))
    deta = np.zeros((6, NX))
    dxi[:3, PHI] = R.T @ skew(w) @ Jl
    dxi[:3, W_] = R.T
    dxi[3:, PHI] = R.T @ skew(v) @ Jl
    dxi[3:, V_] = R.T
    deta[:3, PHI] = R.T @ skew(al) @ Jl
    deta[:3, AL] = R.T
    deta[3:, PHI] = R.T @ skew(z) @ Jl
    deta[3:, A_] = R.T
    deta[3:, W_] = R.T @ skew(v)
    deta[3:, V_] = -R.T @ skew(w)
    return xi, eta, dxi, deta


def object_wrench_jacobian(params: InertialParams, x, gravity=GRAVITY):
    """Gravito-inertial wrench ``Y(xi, eta) theta`` of one object and its state Jacobian."""
    xi, eta, dxi, deta = ee_motion_jacobian(x, gravity)
    Xi = spatial_mass_matrix(params)
    h = Xi @ xi
    w = Xi @ eta - adjoint(xi).T @ h
    d_xi = -(adjoint_transpose_map(h) + adjoint(xi).T @ Xi)
    return w, d_xi @ dxi + Xi @ deta


def sticking_residual(x, zeta, params: InertialParams, contacts: ContactSet, gravity=GRAVITY):
    """``Y theta - G_n zeta`` (zero-friction sticking) and its Jacobians w.r.t. ``x`` and ``zeta``."""
    w, J = object_wrench_jacobian(params, x, gravity)
    Gn = contacts.G_normal
    return w - Gn @ np.asarray(zeta, dtype=float), J, -Gn


# --- configuration and results -------------------------------------------------

def _diag(v, n):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full(n, float(v))
    if v.ndim == 2:
        if not np.allclose(v, np.diag(np.diag(v))):
            raise ValueError("only diagonal weights are supported")
        v = np.diag(v)
    return v.reshape(n)


def default_state_bound():
    # tray analogues of the joint-space limits: |v| 1.1, |omega| 2, |a| 2.5, |alpha| 10
    return np.concatenate([np.full(3, 10.0), np.full(3, 2 * np.pi), np.full(3, 1.1), np.full(3, 2.0),
                           np.full(3, 2.5), np.full(3, 10.0)])


def default_input_bound():
    return np.concatenate([np.full(3, 20.0), np.full(3, 80.0)])


@dataclass
class OcpConfig:
    goal: np.ndarray
    contacts: ContactSet
    params: list
    T: float = 10.0
    dt: float = 0.1
    W_r: np.ndarray = field(default_factory=lambda: np.ones(3))
    W_x: np.ndarray = field(default_factory=lambda: np.concatenate([np.zeros(6), np.full(6, 1e-1), np.full(6, 1e-2)]))
    W_u: np.ndarray = field(default_factory=lambda: np.full(6, 1e-3))
    w_s: float = 100.0
    x_ub: np.ndarray = field(default_factory=default_state_bound)
    x_lb: np.ndarray | None = None
    u_ub: np.ndarray = field(default_factory=default_input_bound)
    u_lb: np.ndarray | None = None
    sqp_iters: int = 3
    terminal_weight: float = 1e3
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float).reshape(3)
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("T and dt must be positive")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("T/dt must be an integer")
        self.W_r = _diag(self.W_r, 3)
        self.W_x = _diag(self.W_x, NX)
        self.W_u = _diag(self.W_u, NU)
        for name in ("W_r", "W_x", "W_u"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be positive semidefinite")
        if self.w_s < 0 or self.terminal_weight < 0:
            raise ValueError("penalty weights must be non-negative")
        self.x_ub = np.asarray(self.x_ub, dtype=float).reshape(NX)
        self.x_lb = -self.x_ub if self.x_lb is None else np.asarray(self.x_lb, dtype=float).reshape(NX)
        self.u_ub = np.asarray(self.u_ub, dtype=float).reshape(NU)
        self.u_lb = -self.u_ub if self.u_lb is None else np.asarray(self.u_lb, dtype=float).reshape(NU)
        if np.any(self.x_lb > self.x_ub) or np.any(self.u_lb > self.u_ub):
            raise ValueError("bounds must be ordered")
        if self.sqp_iters < 1:
            raise ValueError("at least one SQP iteration is required")
        self.params = list(self.params)
        self.gravity = np.asarray(self.gravity, dtype=float).reshape(3)

    @property
    def N(self):
        return int(round(self.T / self.dt))


def planner_params(method, com_box: ComBox, dims):
    """Mass-normalised parameter sets used by the planner for ``center``, ``top`` or ``robust``.

    Inertia about each CoM is that of a uniform cuboid with side lengths ``dims``.
    """
    policy = UniformCuboidInertia(tuple(dims))
    lo, hi = com_box.vertices.min(axis=0), com_box.vertices.max(axis=0)
    mid = 0.5 * (lo + hi)
    if method == "center":
        coms = [mid]
    elif method == "top":
        coms = [np.array([mid[0], mid[1], hi[2]])]
    elif method == "robust":
        return robust_vertex_params(com_box, policy)
    else:
        raise ValueError(f"unknown constraint method {method!r}")
    return [InertialParams.from_mci(1.0, c, policy(c)) for c in coms]


@dataclass(frozen=True)
class Trajectory:
    """Knot-wise states (``N+1``), jerk inputs (``N``) and planned normal forces."""

    dt: float
    states: np.ndarray           # (N+1, 18)
    inputs: np.ndarray           # (N, 6)
    forces: np.ndarray | None = None   # (N+1, n_obj, n_c)
    stats: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)     # free-form labels (method, height, goal, ...)

    def __post_init__(self):
        X = np.asarray(self.states, dtype=float)
        U = np.asarray(self.inputs, dtype=float)
        if X.ndim != 2 or X.shape[1] != NX or U.shape != (X.shape[0] - 1, NU):
            raise ValueError("states must be (N+1, 18) and inputs (N, 6)")
        object.__setattr__(self, "states", X)
        object.__setattr__(self, "inputs", U)

    @property
    def N(self):
        return self.inputs.shape[0]

    @property
    def duration(self):
        return self.N * self.dt

    @property
    def times(self):
        return np.arange(self.N + 1) * self.dt

    @property
    def knots(self):
        """List of ``(t, TrayState, u, zeta)``; the last knot carries a zero input."""
        out = []
        for k, t in enumerate(self.times):
            u = self.inputs[k] if k < self.N else np.zeros(NU)
            z = None if self.forces is None else self.forces[k]
            out.append((t, TrayState.from_vector(self.states[k]), u, z))
        return out

    def dynamics_residual(self):
        """Max over knots of ``|x_{k+1} - step(x_k, u_k)|``."""
        if self.N == 0:
            return 0.0
        return float(max(np.abs(self.states[k + 1] - _step_vec(self.states[k], self.inputs[k], self.dt)).max()
                         for k in range(self.N)))

    def state_at(self, t) -> np.ndarray:
        """State vector at time ``t`` (constant jerk between knots; held at rest after the end)."""
        t = float(np.clip(t, 0.0, self.duration))
        k = min(int(np.floor(t / self.dt + 1e-9)), self.N)
        tau = t - k * self.dt
        if k == self.N or tau <= 1e-12:
            return self.states[k].copy()
        return _step_vec(self.states[k], self.inputs[k], tau)

    def sample_times(self, interval):
        if interval <= 0:
            raise ValueError("interval must be positive")
        n = int(np.floor(self.duration / interval + 1e-9))
        return np.arange(n + 1) * interval

    def ee_motion_at(self, times, gravity=GRAVITY):
        """``(xi, eta)`` arrays of shape ``(len(times), 6)``."""
        g = np.asarray(gravity, dtype=float)
        out = [_ee_from_vec(self.state_at(t), g) for t in times]
        return np.array([o[0] for o in out]), np.array([o[1] for o in out])

    def with_meta(self, **kw):
        return Trajectory(self.dt, self.states, self.inputs, self.forces, self.stats, {**self.meta, **kw})

    def save(self, path):
        """Plain-text table: ``t, q(6), nu(6), nudot(6), u(6)`` per knot.

        ``meta`` entries go into ``# meta key=value`` comment lines.
        """
        U = np.vstack([self.inputs, np.zeros((1, NU))])
        table = np.column_stack([self.times, self.states, U])
        lines = [f"meta {k}={v}" for k, v in self.meta.items()]
        lines.append("t px py pz rx ry rz vx vy vz wx wy wz ax ay az alx aly alz ux uy uz uwx uwy uwz")
        np.savetxt(path, table, header="\n".join(lines), fmt="%.17g")

    @classmethod
    def load(cls, path):
        meta = {}
        with open(path) as f:
            for line in f:
                if line.startswith("# meta "):
                    k, _, v = line[7:].strip().partition("=")
                    meta[k] = parse_meta_value(v)
        table = np.atleast_2d(np.loadtxt(path))
        if table.shape[1] != 1 + NX + NU or table.shape[0] < 2:
            raise ValueError("malformed trajectory table")
        t = table[:, 0]
        dt = float(t[1] - t[0])
        if dt <= 0 or np.abs(np.diff(t) - dt).max() > 1e-9:
            raise ValueError("trajectory time grid must be uniform")
        return cls(dt, table[:, 1:1 + NX], table[:-1, 1 + NX:], meta=meta)


def parse_meta_value(v):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def rollout(x0, inputs, dt):
    X = [np.asarray(x0, dtype=float)]
    for u in inputs:
        X.append(_step_vec(X[-1], u, dt))
    return np.array(X)


# --- SQP ------------------------------------------------------------------------

class _Layout:
    def __init__(self, N, n_obj, n_c):
        self.N, self.n_obj, self.n_c = N, n_obj, n_c
        self.nz = n_obj * n_c
        self.x0 = 0
        self.u0 = (N + 1) * NX
        self.z0 = self.u0 + N * NU
        self.s0 = self.z0 + (N + 1) * self.nz
        self.n = self.s0 + N * 12      # slacks on |nu|, |nudot| limits at knots 1..N

    def x(self, k):
        return np.arange(self.x0 + k * NX, self.x0 + (k + 1) * NX)

    def u(self, k):
        return np.arange(self.u0 + k * NU, self.u0 + (k + 1) * NU)

    def z(self, k, j):
        b = self.z0 + k * self.nz + j * self.n_c
        return np.arange(b, b + self.n_c)

    def s(self, k):
        b = self.s0 + (k - 1) * 12
        return np.arange(b, b + 12)


class _Rows:
    """Accumulates sparse rows of a weighted least-squares residual ``J z + r0``."""

    def __init__(self, n):
        self.n = n
        self.I, self.J, self.V, self.r0, self.w = [], [], [], [], []
        self.m = 0

    def add(self, cols, M, r0, w):
        M = np.atleast_2d(M)
        k = M.shape[0]
        ri = np.repeat(np.arange(self.m, self.m + k), len(cols))
        self.I.append(ri)
        self.J.append(np.tile(cols, k))
        self.V.append(M.reshape(-1))
        self.r0.append(np.broadcast_to(np.asarray(r0, dtype=float), (k,)))
        self.w.append(np.broadcast_to(np.asarray(w, dtype=float), (k,)))
        self.m += k

    def build(self):
        J = sp.csr_matrix((np.concatenate(self.V), (np.concatenate(self.I), np.concatenate(self.J))),
                          shape=(self.m, self.n))
        return J, np.concatenate(self.r0), np.concatenate(self.w)


def _cost_terms(cfg: OcpConfig, lay: _Layout, X, Z, gravity):
    """Gauss-Newton residual rows linearised at the state/force iterate ``(X, Z)``."""
    rows = _Rows(lay.n)
    dt = cfg.dt
    N = lay.N
    I3 = np.eye(3)
    Gn = cfg.contacts.G_normal
    stick = 0.0
    for k in range(N + 1):
        xk = lay.x(k)
        if k < N:
            rows.add(xk[P_], I3, -cfg.goal, dt * cfg.W_r)
            nz = np.flatnonzero(cfg.W_x)
            if nz.size:
                rows.add(xk[nz], np.eye(NX)[nz][:, nz], 0.0, dt * cfg.W_x[nz])
            rows.add(lay.u(k), np.eye(NU), 0.0, dt * cfg.W_u)
        else:
            wt = cfg.terminal_weight
            rows.add(xk[P_], I3, -cfg.goal, wt * cfg.W_r)
            rows.add(xk[6:], np.eye(12), 0.0, wt)
        for j, prm in enumerate(cfg.params):
            w, Jx = object_wrench_jacobian(prm, X[k], gravity)
            res = w - Gn @ Z[k, j]
            stick += float(res @ res)
            cols = np.concatenate([xk, lay.z(k, j)])
            rows.add(cols, np.hstack([Jx, -Gn]), w - Jx @ X[k], cfg.w_s)
        if k >= 1:
            rows.add(lay.s(k), np.eye(12), 0.0, cfg.w_s)
    return rows, stick


def _merit(cfg, lay, X, U, Z, S, gravity, defect_weight):
    """Cost plus slack penalty, with an l1 penalty on dynamics defects."""
    dt = cfg.dt
    N = lay.N
    Gn = cfg.contacts.G_normal
    c = 0.0
    for k in range(N):
        c += dt * (cfg.W_r @ (X[k, P_] - cfg.goal) ** 2 + cfg.W_x @ X[k] ** 2 + cfg.W_u @ U[k] ** 2)
    c += cfg.terminal_weight * (cfg.W_r @ (X[N, P_] - cfg.goal) ** 2 + X[N, 6:] @ X[N, 6:])
    for k in range(N + 1):
        for j, prm in enumerate(cfg.params):
            w, _ = object_wrench_jacobian(prm, X[k], gravity)
            r = w - Gn @ Z[k, j]
            c += cfg.w_s * (r @ r)
    over = np.maximum(np.abs(X[1:, 6:]) - np.maximum(cfg.x_ub[6:], -cfg.x_lb[6:]), 0.0)
    c += cfg.w_s * np.sum(np.maximum(S, over) ** 2)
    defect = sum(np.abs(X[k + 1] - _step_vec(X[k], U[k], dt)).sum() for k in range(N))
    return float(c + defect_weight * defect), float(defect)


def _initial_forces(cfg, n_obj, n_c):
    # static support: the weight split evenly over the contacts
    g = np.linalg.norm(cfg.gravity)
    return np.full((cfg.N + 1, n_obj, n_c), g / max(n_c, 1))


def solve_ocp(cfg: OcpConfig, x0: TrayState, *, verbose=False) -> Trajectory:
    """Gauss-Newton SQP over ``cfg.sqp_iters`` iterations; returns the rolled-out trajectory."""
    N, dt = cfg.N, cfg.dt
    n_obj, n_c = len(cfg.params), cfg.contacts.n_c
    lay = _Layout(N, n_obj, n_c)
    g = cfg.gravity
    xs = x0.vector
    X = np.tile(xs, (N + 1, 1))
    U = np.zeros((N, NU))
    Z = _initial_forces(cfg, n_obj, n_c)
    S = np.zeros((N, 12))
    stats = {"merit": [], "qp_iterations": [], "qp_status": [], "step": [], "sticking_residual": [], "time": 0.0}
    t_start = time.perf_counter()
    defect_weight = 1e3

    # bounds: inputs hard, forces non-negative, slacks non-negative
    lb = np.full(lay.n, -np.inf)
    ub = np.full(lay.n, np.inf)
    for k in range(N):
        lb[lay.u(k)] = cfg.u_lb
        ub[lay.u(k)] = cfg.u_ub
    lb[lay.z0:lay.s0] = 0.0
    lb[lay.s0:] = 0.0
    # soft state limits on nu and nudot: x - s <= ub, -x - s <= -lb
    ri, ci, vi, b_in = [], [], [], []
    m = 0
    for k in range(1, N + 1):
        xk, sk = lay.x(k)[6:], lay.s(k)
        for sign, bound in ((1.0, cfg.x_ub[6:]), (-1.0, -cfg.x_lb[6:])):
            r = np.arange(m, m + 12)
            ri += [r, r]
            ci += [xk, sk]
            vi += [np.full(12, sign), np.full(12, -1.0)]
            b_in.append(bound)
            m += 12
    Ain = sp.csr_matrix((np.concatenate(vi), (np.concatenate(ri), np.concatenate(ci))), shape=(m, lay.n))
    bin_ = np.concatenate(b_in)

    status = "optimal"
    for it in range(cfg.sqp_iters):
        merit0, _ = _merit(cfg, lay, X, U, Z, S, g, defect_weight)
        stats["merit"].append(merit0)
        # dynamics linearised at the current iterate
        eI, eJ, eV, beq = [], [], [], []
        row = 0
        eI.append(np.arange(NX))
        eJ.append(lay.x(0))
        eV.append(np.ones(NX))
        beq.append(xs)
        row += NX
        for k in range(N):
            A, Bm = model_jacobians(X[k], U[k], dt)
            f = _step_vec(X[k], U[k], dt)
            r = np.arange(row, row + NX)
            eI += [np.repeat(r, NX), np.repeat(r, NU), r]
            eJ += [np.tile(lay.x(k), NX), np.tile(lay.u(k), NX), lay.x(k + 1)]
            eV += [-A.reshape(-1), -Bm.reshape(-1), np.ones(NX)]
            beq.append(f - A @ X[k] - Bm @ U[k])
            row += NX
        Aeq = sp.csr_matrix((np.concatenate(eV), (np.concatenate(eI), np.concatenate(eJ))), shape=(row, lay.n))
        beq = np.concatenate(beq)

        rows, stick = _cost_terms(cfg, lay, X, Z, g)
        stats["sticking_residual"].append(np.sqrt(stick))
        J, r0, w = rows.build()
        Wd = sp.diags(w)
        P = (J.T @ Wd @ J).tocsc()
        q = J.T @ (w * r0)
        res = _qp.solve_qp(_qp.QuadProgram(P, q, Aeq, beq, Ain, bin_, lb, ub), tol=1e-8, max_iter=100,
                           certify_infeasible=False)
        stats["qp_iterations"].append(res.iterations)
        stats["qp_status"].append(res.status)
        if res.x is None or not np.all(np.isfinite(res.x)):
            status = f"qp_failure@{it}"
            break
        if not res.ok:
            status = f"qp_{res.status}@{it}"
        z = res.x
        Xn = z[:lay.u0].reshape(N + 1, NX)
        Un = z[lay.u0:lay.z0].reshape(N, NU)
        Zn = z[lay.z0:lay.s0].reshape(N + 1, n_obj, n_c)
        Sn = z[lay.s0:].reshape(N, 12)
        # backtracking on the merit function
        alpha = 1.0
        while True:
            Xa = X + alpha * (Xn - X)
            Ua = U + alpha * (Un - U)
            Za = Z + alpha * (Zn - Z)
            Sa = S + alpha * (Sn - S)
            ma, _ = _merit(cfg, lay, Xa, Ua, Za, Sa, g, defect_weight)
            if ma <= merit0 or alpha < 1e-3:
                break
            alpha *= 0.5
        stats["step"].append(alpha)
        X, U, Z, S = Xa, Ua, Za, Sa
        if verbose:
            print(f"sqp {it}: merit {merit0:.6g} -> {ma:.6g}, step {alpha}, qp {res.status}/{res.iterations}")

    # final rollout makes the returned knots exactly consistent with the model
    Xr = rollout(xs, U, dt)
    merit_final, defect = _merit(cfg, lay, Xr, U, Z, S, g, defect_weight)
    stats["merit"].append(merit_final)
    stats["rollout_deviation"] = float(np.abs(Xr - X).max())
    stats["status"] = status
    stats["time"] = time.perf_counter() - t_start
    traj = Trajectory(dt, Xr, U, Z, stats)
    if status.startswith("qp_failure"):
        raise SolverFailure(f"SQP aborted ({status})", status, partial=traj)
    return traj


def sticking_violation(traj: Trajectory, H, params, gravity=GRAVITY, times=None):
    """Worst ``h_i^T Y theta_j`` over the knots (or ``times``) and objects."""
    from .contact import sticking_margins
    times = traj.times if times is None else times
    xi, eta = traj.ee_motion_at(times, gravity)
    worst = -np.inf
    for a, b in zip(xi, eta):
        m = sticking_margins(H, a, b, params)
        if m.size:
            worst = max(worst, float(m.max()))
    return worst


def tracking_command(q_d, nu_d, q, Kp):
    """Affine tracking law ``K_p (q_d - q) + nu_d``."""
    Kp = np.atleast_2d(np.asarray(Kp, dtype=float))
    if Kp.shape == (1, 1):
        Kp = Kp[0, 0] * np.eye(np.size(q))
    if not np.allclose(Kp, Kp.T) or np.linalg.eigvalsh(0.5 * (Kp + Kp.T)).min() <= 0:
        raise ValueError("Kp must be symmetric positive definite")
    return Kp @ (np.asarray(q_d, dtype=float) - np.asarray(q, dtype=float)) + np.asarray(nu_d, dtype=float)
