import numpy as np
import pytest

from waiter.config import ScenarioConfig
from waiter.contact import ComBox
from waiter.errors import InfeasibleCom
from waiter.moments import BoundingShape
from waiter.rigidbody import InertialParams, cuboid_inertia
from waiter.simulate import (DROP_DISPLACEMENT, SimObject, SweepRow, max_inertia_params, read_sweep_csv,
                             simulate_transport, success_table, sweep, sweep_coms, sweep_objects, tray_motion,
                             write_sweep_csv)
from waiter.trajopt import NU, NX, Trajectory, TrayState, rollout, solve_ocp

SCENARIO = ScenarioConfig()


def const_accel_traj(a, duration, dt=0.1):
    x0 = np.zeros(NX)
    x0[12:15] = a
    N = int(round(duration / dt))
    U = np.zeros((N, NU))
    return Trajectory(dt, rollout(x0, U, dt), U)


def short_box(mu):
    dims = (0.15, 0.15, 0.1)
    prm = InertialParams.from_mci(1.0, [0, 0, 0.05], cuboid_inertia(1.0, dims))
    return SimObject(prm, dims, mu)


def test_static_tray_keeps_object():
    obj = short_box(0.2)
    res = simulate_transport(const_accel_traj(np.zeros(3), 10.0), obj)
    assert res.success and res.max_displacement < 1e-6
    assert res.times[-1] == pytest.approx(10.0)


def test_sliding_beyond_friction_limit():
    # 10 m/s^2 needs a friction ratio of about 1 > mu = 0.2
    obj = short_box(0.2)
    res = simulate_transport(const_accel_traj([10.0, 0, 0], 1.0), obj)
    assert not res.success and res.max_displacement >= DROP_DISPLACEMENT
    assert np.all(np.diff(res.displacement) >= 0)
    assert res.displacement[len(res.displacement) // 2] > 1e-3
    # friction stays inside the cone while sliding
    assert res.friction_excess <= 1e-8 and res.min_normal >= 0


def test_below_friction_limit_sticks():
    obj = short_box(0.2)
    res = simulate_transport(const_accel_traj([1.0, 0, 0], 1.0), obj)     # 1 < 0.2 * 9.81
    assert res.success and res.max_displacement < 1e-4


def test_frictionless_horizontal_momentum_conserved():
    obj = short_box(0.0)
    res = simulate_transport(const_accel_traj([2.0, 1.0, 0], 0.2), obj)
    T = res.times[-1] - res.times[0]
    drift = np.abs(res.positions[:, :2] - res.positions[0, :2]).max()
    assert drift <= 1e-8 * max(T, 1.0) ** 2
    assert res.max_displacement > 0.02        # the tray moved away underneath


def test_deterministic_replay():
    obj = short_box(0.2)
    tr = const_accel_traj([3.0, 0, 0], 0.5)
    a, b = simulate_transport(tr, obj), simulate_transport(tr, obj)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.rotations, b.rotations)
    assert a.max_displacement == b.max_displacement


def test_simulator_input_validation():
    obj = short_box(0.2)
    with pytest.raises(ValueError):
        simulate_transport(const_accel_traj(np.zeros(3), 1.0), obj, sim_dt=2e-3)
    with pytest.raises(ValueError):
        SimObject(InertialParams.from_mci(1.0, [0.5, 0, 0.05], np.eye(3) * 1e-3), (0.15, 0.15, 0.1))
    with pytest.raises(ValueError):
        SimObject(obj.params, (0.15, 0.15, 0.1), mu=-0.1)


def test_tray_motion_matches_trajectory_knots():
    rng = np.random.default_rng(0)
    U = rng.standard_normal((5, NU))
    tr = Trajectory(0.1, rollout(np.zeros(NX), U, 0.1), U)
    t, p, R, v, w = tray_motion(tr, 1e-3)
    assert len(t) == 501
    for k in range(6):
        x = tr.states[k]
        assert np.allclose(p[100 * k], x[:3]) and np.allclose(v[100 * k], x[6:9])
        assert np.allclose(R[100 * k], TrayState.from_vector(x).rotation)
    assert np.allclose(p[250], tr.state_at(0.25)[:3])


# ---------------------------------------------------------------- sweep helpers

def test_max_inertia_cube_centroid():
    s = 0.1
    shape = BoundingShape.box([-s] * 3, [s] * 3)
    prm = max_inertia_params(shape, np.zeros(3))
    # equal vertex masses: I_xx = sum w (y^2 + z^2) = 2 s^2
    assert np.allclose(prm.inertia_com, 2 * s**2 * np.eye(3), atol=1e-9)


def test_max_inertia_com_at_vertex():
    shape = BoundingShape.box([0, 0, 0], [0.2, 0.2, 0.2])
    prm = max_inertia_params(shape, [0.2, 0.2, 0.2])
    assert np.linalg.eigvalsh(prm.inertia_com).min() < 1e-8
    assert np.allclose(prm.com, [0.2, 0.2, 0.2])


def test_max_inertia_single_point_and_infeasible():
    prm = max_inertia_params(np.array([[0.1, 0.2, 0.3]]), [0.1, 0.2, 0.3])
    assert np.allclose(prm.inertia_com, 0)
    with pytest.raises(InfeasibleCom):
        max_inertia_params(BoundingShape.box([0, 0, 0], [1, 1, 1]), [2.0, 0.5, 0.5])


def test_sweep_objects_are_realizable():
    h = 0.6
    objs = sweep_objects(SCENARIO.dims(h), SCENARIO.com_box(h))
    assert len(objs) == 45 and len(sweep_coms(SCENARIO.com_box(h))) == 15
    assert {s for _, s, _ in objs} == {1.0, 0.5, 0.1}
    for ci, s, obj in objs:
        assert np.all(np.linalg.eigvalsh(obj.params.inertia_com) >= -1e-12)


def test_sweep_csv_round_trip(tmp_path):
    rows = [SweepRow("robust", 0.6, 0, 3, 0.5, True, 1e-4), SweepRow("center", 0.6, 1, 2, 1.0, False, 0.07)]
    path = tmp_path / "s.csv"
    write_sweep_csv(rows, path)
    back = read_sweep_csv(path)
    assert back == rows
    assert success_table(back) == {("robust", 0.6): 1.0, ("center", 0.6): 0.0}


@pytest.mark.slow
def test_matched_model_gentle_goal_all_methods_succeed():
    h = 0.3
    center = np.array([0.0, 0.0, h / 2])

    def plan(height, method, goal):
        return solve_ocp(SCENARIO.ocp_config(height, method, goal), TrayState.at_rest())

    rows = sweep([h], ["center", "top", "robust"], [[0.5, 0.0, 0.0]], plan, dims_fn=SCENARIO.dims,
                 com_box_fn=lambda _: ComBox(center[None]), scales=(1.0,))
    assert len(rows) == 3 * 15 and all(r.success for r in rows)


@pytest.mark.slow
def test_robust_plan_impulses_valid():
    h = 0.6
    tr = solve_ocp(SCENARIO.ocp_config(h, "robust"), TrayState.at_rest())
    tray = tray_motion(tr, 1e-3)
    for _, _, obj in sweep_objects(SCENARIO.dims(h), SCENARIO.com_box(h))[::7]:
        res = simulate_transport(tr, obj, tray=tray)
        assert res.success and res.max_displacement <= 5e-3
        assert res.min_normal >= 0 and res.friction_excess <= 1e-8 and res.complementarity <= 1e-6
