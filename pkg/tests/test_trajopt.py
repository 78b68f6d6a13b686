import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from waiter.config import ScenarioConfig
from waiter.contact import sticking_margins
from waiter.errors import SolverFailure
from waiter.rigidbody import GRAVITY, giw
from waiter.trajopt import (NU, NX, _step_vec, OcpConfig, Trajectory, TrayState, ee_motion, ee_motion_jacobian, left_jacobian,
                            left_jacobian_inv, model_jacobians, model_step, object_wrench_jacobian, rollout,
                            solve_ocp, sticking_residual, sticking_violation, tracking_command)

SCENARIO = ScenarioConfig()


def random_state(rng, scale=1.0):
    x = scale * rng.standard_normal(NX)
    phi = rng.standard_normal(3)
    x[3:6] = phi / np.linalg.norm(phi) * rng.uniform(0, 2.5)
    return x


def central_diff(f, x, h=1e-6):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def rel_err(A, B):
    return np.abs(A - B).max() / max(np.abs(B).max(), 1.0)


# ---------------------------------------------------------------- state and model

def test_tray_state_rewraps_rotation():
    s = TrayState(np.r_[0, 0, 0, 3.5, 0, 0], np.zeros(6), np.zeros(6))
    assert np.linalg.norm(s.q[3:]) < np.pi
    assert np.allclose(Rotation.from_rotvec(s.q[3:]).as_matrix(), Rotation.from_rotvec([3.5, 0, 0]).as_matrix())
    with pytest.raises(ValueError):
        TrayState(np.r_[np.nan, np.zeros(5)], np.zeros(6), np.zeros(6))


def test_model_step_at_rest_is_fixed_point():
    x = TrayState(np.r_[1, 2, 3, 0.1, -0.2, 0.3], np.zeros(6), np.zeros(6))
    y = model_step(x, np.zeros(NU), 0.1)
    assert np.allclose(y.vector, x.vector, atol=1e-15)
    with pytest.raises(ValueError):
        model_step(x, np.zeros(NU), 0.0)


def test_model_step_constant_acceleration():
    v, a, dt = np.array([0.3, -0.1, 0.2]), np.array([1.0, 2.0, -0.5]), 0.25
    # nu = (v, omega) and nudot = (a, alpha), linear parts first
    x = TrayState.from_vector(np.r_[np.zeros(6), v, np.zeros(3), a, np.zeros(3)])
    y = model_step(x, np.zeros(NU), dt)
    assert np.allclose(y.q[:3], v * dt + a * dt**2 / 2)
    assert np.allclose(y.nu[:3], v + a * dt) and np.allclose(y.nudot[:3], a)


def test_orientation_halving_converges_third_order():
    rng = np.random.default_rng(4)
    x = random_state(rng, 0.5)
    u = rng.standard_normal(NU)

    def err(dt):
        once = model_step(TrayState.from_vector(x), u, dt)
        half = model_step(model_step(TrayState.from_vector(x), u, dt / 2), u, dt / 2)
        R1, R2 = Rotation.from_rotvec(once.q[3:]), Rotation.from_rotvec(half.q[3:])
        return np.linalg.norm((R1.inv() * R2).as_rotvec())

    e1, e2 = err(0.04), err(0.02)
    assert e1 > 0
    assert np.log2(e1 / e2) > 2.7          # O(dt^3) local discrepancy


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_model_jacobians_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x, u, dt = random_state(rng, 0.5), rng.standard_normal(NU), 0.1
    A, B = model_jacobians(x, u, dt)
    Ad = central_diff(lambda z: _step_vec(z, u, dt), x)
    Bd = central_diff(lambda z: _step_vec(x, z, dt), u)
    assert rel_err(A, Ad) < 1e-6 and rel_err(B, Bd) < 1e-6


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_left_jacobian_inverse(seed):
    phi = np.random.default_rng(seed).standard_normal(3) * 1.5
    assert np.allclose(left_jacobian(phi) @ left_jacobian_inv(phi), np.eye(3), atol=1e-10)


# ---------------------------------------------------------------- end-effector motion

def test_ee_motion_level_stationary():
    xi, eta = ee_motion(TrayState.at_rest())
    assert np.allclose(xi, 0) and np.allclose(eta, [0, 0, 0, 0, 0, 9.81])


def test_ee_motion_tilted_tray():
    s = TrayState(np.r_[0, 0, 0, np.pi / 2, 0, 0], np.zeros(6), np.zeros(6))
    _, eta = ee_motion(s)
    R = Rotation.from_rotvec([np.pi / 2, 0, 0]).as_matrix()
    assert np.allclose(eta[3:], R.T @ -GRAVITY)
    assert np.allclose(eta[3:], [0, 9.81, 0], atol=1e-12)


def test_ee_motion_pure_linear_acceleration():
    a = np.array([1.0, -2.0, 0.5])
    s = TrayState(np.zeros(6), np.zeros(6), np.r_[a, 0, 0, 0])
    _, eta = ee_motion(s)
    assert np.allclose(eta[3:], a - GRAVITY)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_ee_motion_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = random_state(rng)
    _, _, dxi, deta = ee_motion_jacobian(x)
    f_xi = lambda z: ee_motion(TrayState.from_vector(z))[0]
    f_eta = lambda z: ee_motion(TrayState.from_vector(z))[1]
    assert rel_err(dxi, central_diff(f_xi, x)) < 1e-6
    assert rel_err(deta, central_diff(f_eta, x)) < 1e-6


def test_object_wrench_matches_giw():
    rng = np.random.default_rng(8)
    x = random_state(rng)
    prm = SCENARIO.ocp_config().params[3]
    w, _ = object_wrench_jacobian(prm, x)
    xi, eta = ee_motion(TrayState.from_vector(x))
    assert np.allclose(w, giw(prm, xi, eta), atol=1e-12)


def test_sticking_jacobians_match_finite_differences():
    rng = np.random.default_rng(10)
    cs = SCENARIO.contact_set(0.0)
    H = SCENARIO.contact_set(0.2).H
    params = SCENARIO.ocp_config().params
    for _ in range(20):
        x = random_state(rng)
        zeta = rng.uniform(0, 3, cs.n_c)
        prm = params[rng.integers(len(params))]
        _, Jx, Jz = sticking_residual(x, zeta, prm, cs)
        f = lambda z: sticking_residual(z, zeta, prm, cs)[0]
        assert rel_err(Jx, central_diff(f, x)) < 1e-5
        assert np.allclose(Jz, central_diff(lambda z: sticking_residual(x, z, prm, cs)[0], zeta), atol=1e-8)
        # margins h^T Y theta: the same Jacobian composed with H
        g = lambda z: sticking_margins(H, *ee_motion(TrayState.from_vector(z)), [prm])[:, 0]
        assert rel_err(H @ object_wrench_jacobian(prm, x)[1], central_diff(g, x)) < 1e-5


# ---------------------------------------------------------------- configuration and trajectories

def test_ocp_config_validation():
    cs = SCENARIO.contact_set(0.0)
    with pytest.raises(ValueError):
        OcpConfig(goal=np.zeros(3), contacts=cs, params=[], T=1.0, dt=0.3)
    with pytest.raises(ValueError):
        OcpConfig(goal=np.zeros(3), contacts=cs, params=[], W_u=-np.ones(6))
    with pytest.raises(ValueError):
        OcpConfig(goal=np.zeros(3), contacts=cs, params=[], x_lb=np.full(NX, 20.0))
    cfg = OcpConfig(goal=np.zeros(3), contacts=cs, params=[])
    assert cfg.N == 100


def test_trajectory_round_trip_and_interpolation(tmp_path):
    rng = np.random.default_rng(3)
    U = 0.5 * rng.standard_normal((7, NU))
    X = rollout(TrayState.at_rest().vector, U, 0.1)
    tr = Trajectory(0.1, X, U, meta={"method": "robust", "height": 0.6})
    assert tr.dynamics_residual() == 0.0
    path = tmp_path / "t.txt"
    tr.save(path)
    back = Trajectory.load(path)
    assert np.array_equal(back.states, tr.states) and np.array_equal(back.inputs, tr.inputs)
    assert back.meta == {"method": "robust", "height": 0.6} and back.dt == pytest.approx(0.1)
    assert np.allclose(tr.state_at(0.3), X[3]) and np.allclose(tr.state_at(5.0), X[-1])
    assert np.allclose(tr.state_at(0.33), _step_vec(X[3], U[3], 0.03))
    assert len(tr.knots) == 8 and len(tr.sample_times(0.01)) == 71


def test_tracking_command():
    rng = np.random.default_rng(0)
    q, nu = rng.standard_normal(6), rng.standard_normal(6)
    assert np.allclose(tracking_command(q, nu, q, np.eye(6)), nu)
    qd = rng.standard_normal(6)
    assert np.allclose(tracking_command(qd, np.zeros(6), q, 1.0), qd - q)
    Kp = np.diag(rng.uniform(0.5, 2, 6))
    a, b = tracking_command(qd, nu, q, Kp), tracking_command(2 * qd - q, nu, q, Kp)
    assert np.allclose(b - nu, 2 * (a - nu))
    with pytest.raises(ValueError):
        tracking_command(qd, nu, q, -np.eye(6))


# ---------------------------------------------------------------- planning

def test_plan_goal_at_start_stays_put():
    cfg = SCENARIO.ocp_config(goal=[0.0, 0.0, 0.0])
    tr = solve_ocp(cfg, TrayState.at_rest())
    assert np.abs(tr.inputs).max() < 1e-6 and np.abs(tr.states).max() < 1e-6
    assert tr.stats["merit"][-1] < 1e-3


def test_plan_without_sticking_reaches_goal():
    cfg = SCENARIO.ocp_config(goal=[2.0, 0.0, 0.0])
    cfg.params = []
    tr = solve_ocp(cfg, TrayState.at_rest())
    assert np.linalg.norm(tr.states[-1, :3] - [2, 0, 0]) < 0.01
    assert np.linalg.norm(tr.states[-1, 6:9]) < 0.01
    assert tr.dynamics_residual() <= 1e-8


@pytest.mark.slow
def test_robust_plan_properties():
    cfg = SCENARIO.ocp_config(0.6, "robust", [-2.0, 1.0, 0.0])
    assert len(cfg.params) == 8
    tr = solve_ocp(cfg, TrayState.at_rest())
    assert tr.N == 100 and tr.dynamics_residual() <= 1e-8
    assert tr.stats["status"] == "optimal"
    assert tr.stats["merit"][-1] <= tr.stats["merit"][1]
    # hard post-hoc check of the softened planner constraints
    H0 = cfg.contacts.H
    assert sticking_violation(tr, H0, cfg.params) <= 0.05
    # the unconstrained solve is no better for the vertex objects
    free = SCENARIO.ocp_config(0.6, "robust", [-2.0, 1.0, 0.0])
    free.params = []
    tf = solve_ocp(free, TrayState.at_rest())
    assert sticking_violation(tr, H0, cfg.params) <= sticking_violation(tf, H0, cfg.params)


def test_solver_failure_carries_partial_trajectory(monkeypatch):
    from waiter.solvers import qp as _qp
    real = _qp.solve_qp

    def broken(prob, **kw):
        return dataclasses.replace(real(prob, **kw), x=None)

    monkeypatch.setattr(_qp, "solve_qp", broken)
    cfg = SCENARIO.ocp_config(goal=[0.5, 0.0, 0.0])
    cfg.params = []
    with pytest.raises(SolverFailure) as info:
        solve_ocp(cfg, TrayState.at_rest())
    assert info.value.partial is not None and info.value.partial.N == cfg.N
