import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waiter.contact import ComBox, ContactSet
from waiter.errors import DegreeOverflow, DimensionMismatch
from waiter.moments import (BoundingShape, MonomialBasis, Relaxation, TruncatedMomentSequence, VerificationReport,
                            affine_moment_map, halfspace_poly, is_realizable, localizing_matrix, max_violation_sdp,
                            moment_matrix, params_to_tms, riesz, tms_to_params, verify_motion)
from waiter.rigidbody import GRAVITY, InertialParams, cuboid_inertia, point_mass_inertia, regressor

H_BOX = 0.6
K = BoundingShape.box([-0.075, -0.075, 0.0], [0.075, 0.075, H_BOX])
C = ComBox.box([-0.06, -0.06, 0.0], [0.06, 0.06, H_BOX])
BASE = ContactSet.polygon([(x, y, 0.0) for x in (-0.075, 0.075) for y in (-0.075, 0.075)], mu=0.2)


def poly_eval(f, r):
    """Independent polynomial evaluation straight from the exponent list."""
    B = MonomialBasis(0)
    d = 0
    while MonomialBasis.size(d) < len(f):
        d += 1
    B = MonomialBasis(d)
    return sum(c * np.prod(np.asarray(r, float) ** np.array(a)) for c, a in zip(f, B.exponents))


def dirac_mixture_in(rng, shape_lo, shape_hi, com_box: ComBox, n_atoms=None):
    """Random atoms in the box with their CoM moved to a random point of ``com_box``."""
    n = int(rng.integers(1, 8)) if n_atoms is None else n_atoms
    w = rng.dirichlet(np.ones(n))
    P = rng.uniform(shape_lo, shape_hi, (n, 3))
    lam = rng.dirichlet(np.ones(com_box.n_v))
    c = lam @ com_box.vertices
    D = P - w @ P
    # largest s <= 1 keeping c + s D inside the box
    s = 1.0
    for k in range(3):
        for d in D[:, k]:
            if d > 1e-15:
                s = min(s, (shape_hi[k] - c[k]) / d)
            elif d < -1e-15:
                s = min(s, (shape_lo[k] - c[k]) / d)
    return w, c + s * D


def params_from_atoms(w, P):
    I = sum(wi * point_mass_inertia(1.0, p) for wi, p in zip(w, P))
    return InertialParams(np.concatenate([[np.sum(w)], w @ P, [I[0, 0], I[0, 1], I[0, 2], I[1, 1], I[1, 2], I[2, 2]]]))


# ---------------------------------------------------------------- basis / Riesz

def test_basis_order_and_size():
    B = MonomialBasis(2)
    assert len(B) == 10 and B.exponents[0] == (0, 0, 0)
    assert B.exponents[1:4] == ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    assert B.exponents[4:] == ((2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2))
    assert len(MonomialBasis(4)) == 35
    assert list(MonomialBasis(4).degrees) == sorted(MonomialBasis(4).degrees)


def test_riesz_examples():
    z = TruncatedMomentSequence.from_atoms([1.0], [[2.0, 0.0, 0.0]], 2)
    assert riesz([1.0], z) == z.y[0] == 1.0
    assert riesz([0, 1.0, 0, 0], z) == 2.0
    with pytest.raises(DegreeOverflow):
        riesz(np.r_[np.zeros(34), 1.0], z)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_riesz_matches_atom_evaluation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    w, P = rng.uniform(0.1, 1, n), rng.uniform(-1, 1, (n, 3))
    z = TruncatedMomentSequence.from_atoms(w, P, 4)
    f = rng.standard_normal(35)
    assert np.isclose(riesz(f, z), sum(wi * poly_eval(f, p) for wi, p in zip(w, P)), rtol=1e-10, atol=1e-10)


def test_tms_validation():
    with pytest.raises(DimensionMismatch):
        TruncatedMomentSequence(np.ones(11), 2)
    with pytest.raises(ValueError):
        TruncatedMomentSequence(np.r_[np.nan, np.zeros(9)], 2)


# ---------------------------------------------------------------- moment / localizing matrices

def test_moment_matrix_dirac():
    r = np.array([0.3, -0.2, 0.5])
    z = TruncatedMomentSequence.from_atoms([1.0], [r], 4)
    M1 = moment_matrix(z, 1)
    assert np.allclose(M1, np.outer(np.r_[1, r], np.r_[1, r]))
    M2 = moment_matrix(z, 2)
    b = MonomialBasis(2).evaluate(r)
    assert np.allclose(M2, np.outer(b, b))
    assert np.linalg.matrix_rank(M2, tol=1e-10) == 1
    assert np.linalg.eigvalsh(M2).min() > -1e-12
    with pytest.raises(DegreeOverflow):
        moment_matrix(z, 3)


def test_moment_matrix_uniform_cube():
    # uniform unit mass on [-1,1]^3: first moments 0, second moments 1/3 on the diagonal
    y = np.zeros(10)
    y[0] = 1.0
    y[[4, 7, 9]] = 1.0 / 3.0
    M1 = moment_matrix(TruncatedMomentSequence(y, 2), 1)
    assert np.allclose(M1, np.diag([1, 1 / 3, 1 / 3, 1 / 3]))


def test_localizing_matrix_examples():
    r0 = np.array([0.1, 0.2, 0.3])
    z = TruncatedMomentSequence.from_atoms([1.0], [r0], 4)
    assert np.allclose(localizing_matrix([1.0], z, 2), moment_matrix(z, 2))
    p = halfspace_poly([1.0, 0, 0], 0.5)          # 0.5 - x >= 0, holds at r0
    L = localizing_matrix(p, z, 1)
    b = MonomialBasis(1).evaluate(r0)
    assert np.allclose(L, (0.5 - r0[0]) * np.outer(b, b))
    q = halfspace_poly([1.0, 0, 0], 0.0)          # -x >= 0, violated at r0
    assert np.linalg.eigvalsh(localizing_matrix(q, z, 1)).min() < 0
    with pytest.raises(DegreeOverflow):
        localizing_matrix(p, z, 2)


def test_affine_moment_map_matches_atoms():
    rng = np.random.default_rng(1)
    P = rng.uniform(-1, 1, (4, 3))
    w = rng.uniform(0.1, 1, 4)
    c, s = np.array([0.1, -0.2, 0.3]), np.array([0.5, 2.0, 0.7])
    T = affine_moment_map(4, c, s)
    z = TruncatedMomentSequence.from_atoms(w, P, 4)
    zs = TruncatedMomentSequence.from_atoms(w, c + s * P, 4)
    assert np.allclose(T @ z.y, zs.y, atol=1e-12)


# ---------------------------------------------------------------- inertial parameters <-> moments

def test_params_to_tms_examples():
    cube = InertialParams.from_mci(1.0, np.zeros(3), np.diag([2 / 3] * 3))
    z = params_to_tms(cube)
    assert np.allclose(moment_matrix(z, 1), np.diag([1, 1 / 3, 1 / 3, 1 / 3]))
    r = np.array([0.2, -0.4, 0.7])
    pm = InertialParams.from_mci(1.0, r, np.zeros((3, 3)))
    assert np.allclose(moment_matrix(params_to_tms(pm), 1)[1:, 1:], np.outer(r, r))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_params_tms_round_trip_and_pseudo_inertia(seed):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(10)
    prm = InertialParams(theta)
    z = params_to_tms(prm)
    assert np.allclose(tms_to_params(z).theta, theta, atol=1e-12)
    # pseudo-inertia [[m, h^T],[h, tr(I)/2 - I]] written out independently
    m, h, I = prm.mass, prm.first_moment, prm.inertia
    J = np.block([[np.array([[m]]), h[None]], [h[:, None], 0.5 * np.trace(I) * np.eye(3) - I]])
    assert np.allclose(moment_matrix(z, 1), J, atol=1e-12)


# ---------------------------------------------------------------- realizability

def test_uniform_cuboid_realizable():
    dims = (0.15, 0.15, H_BOX)
    prm = InertialParams.from_mci(1.0, [0, 0, H_BOX / 2], cuboid_inertia(1.0, dims))
    assert is_realizable(prm, K, r=2)


def test_dirac_outside_shape_not_realizable():
    prm = InertialParams.from_mci(1.0, [0.2, 0.0, 0.3], np.zeros((3, 3)))
    assert not is_realizable(prm, K, r=2)


def test_zero_mass_realizable():
    assert is_realizable(TruncatedMomentSequence(np.zeros(10), 2), K, r=2)


def test_non_psd_pseudo_inertia_not_realizable():
    y = np.zeros(10)
    y[0] = 1.0
    y[[4, 7, 9]] = [-1e-3, 1e-3, 1e-2]        # negative second moment in x
    z = TruncatedMomentSequence(y, 2)
    assert np.linalg.eigvalsh(moment_matrix(z, 1)).min() < 0
    assert not is_realizable(z, K, r=2)


def test_dirac_mixtures_satisfy_all_blocks():
    rng = np.random.default_rng(7)
    relax = Relaxation(K, 2)
    worst = np.inf
    for _ in range(500):
        w, P = dirac_mixture_in(rng, K.lo, K.hi, C)
        z = TruncatedMomentSequence.from_atoms(w, P, 4)
        blocks = relax.block_values(relax.normalize(z.y))
        worst = min(worst, min(np.linalg.eigvalsh(B).min() for B in blocks))
    assert worst >= -1e-9


# ---------------------------------------------------------------- worst-case violation bound

def dynamic_motion(seed=3):
    rng = np.random.default_rng(seed)
    xi = np.r_[0.5 * rng.standard_normal(3), 0.5 * rng.standard_normal(3)]
    eta = np.r_[2.0 * rng.standard_normal(3), rng.standard_normal(3) - GRAVITY]
    return xi, eta


def test_bound_dominates_sampled_objects():
    xi, eta = dynamic_motion()
    Y = regressor(xi, eta)
    H = BASE.H
    bounds = Relaxation(K, 2).max_violation(H @ Y, C)[0]
    rng = np.random.default_rng(11)
    worst = np.inf
    for _ in range(500):
        w, P = dirac_mixture_in(rng, K.lo, K.hi, C)
        theta = params_from_atoms(w, P).theta
        worst = min(worst, np.min(bounds - H @ Y @ theta))
    assert worst >= -1e-6


def test_static_level_tray_all_rows_negative():
    xi, eta = np.zeros(6), np.r_[np.zeros(3), -GRAVITY]
    rep = verify_motion([0.0], [xi], [eta], BASE.H, K, C, prune=False)
    assert np.all(rep.bounds < 0) and rep.verified


def test_zero_motion_zero_bound():
    b, _ = max_violation_sdp(BASE.H[0], np.zeros((6, 10)), K, C)
    assert abs(b) < 1e-7
    rep = verify_motion([0.0], [np.zeros(6)], [np.zeros(6)], BASE.H, K, C, prune=False)
    assert np.allclose(rep.bounds, 0.0, atol=1e-7)


def test_max_violation_returns_feasible_theta():
    xi, eta = dynamic_motion(5)
    Y = regressor(xi, eta)
    b, theta = max_violation_sdp(BASE.H[3], Y, K, C)
    assert np.isclose(BASE.H[3] @ Y @ theta.theta, b, atol=1e-5)
    assert abs(theta.mass - 1.0) < 1e-7 and C.contains(theta.com, 1e-6)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_order_two_is_tighter_than_order_one(seed):
    xi, eta = dynamic_motion(seed)
    g = BASE.H @ regressor(xi, eta)
    b1 = Relaxation(K, 1).max_violation(g, C)[0]
    b2 = Relaxation(K, 2).max_violation(g, C)[0]
    assert np.all(b2 <= b1 + 1e-6)


def test_pruned_per_time_maxima_match_exhaustive():
    rng = np.random.default_rng(2)
    xis = [0.3 * rng.standard_normal(6) for _ in range(6)]
    etas = [np.r_[0.5 * rng.standard_normal(3), 1.5 * rng.standard_normal(3) - GRAVITY] for _ in range(6)]
    t = np.arange(6) * 0.01
    full = verify_motion(t, xis, etas, BASE.H, K, C, prune=False)
    pruned = verify_motion(t, xis, etas, BASE.H, K, C, prune=True)
    assert np.allclose(full.per_time_max, pruned.per_time_max, atol=1e-6)
    assert np.all(pruned.bounds >= full.bounds - 1e-6)        # skipped entries keep valid upper bounds
    assert pruned.n_solves[2] < full.n_solves[2]


def test_single_instant_runtime():
    xi, eta = dynamic_motion()
    t0 = time.perf_counter()
    verify_motion([0.0], [xi], [eta], BASE.H, K, C, prune=False)
    assert time.perf_counter() - t0 < 10.0


def test_report_csv_round_trip(tmp_path):
    xi, eta = dynamic_motion()
    rep = verify_motion([0.0, 0.01], [xi, xi], [eta, eta], BASE.H, K, C)
    rep.meta = {"method": "robust", "height": 0.6}
    path = tmp_path / "v.csv"
    rep.write_csv(path)
    back = VerificationReport.read_csv(path)
    assert np.allclose(back.bounds, rep.bounds, rtol=1e-9) and np.array_equal(back.order, rep.order)
    assert back.meta == {"method": "robust", "height": 0.6}
    assert back.max_bound == pytest.approx(rep.max_bound)
