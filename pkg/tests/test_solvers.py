import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waiter.solvers import (INFEASIBLE, OPTIMAL, UNBOUNDED, PsdBlock, QuadProgram, SdpProblem,
                            solve_lp, solve_qp, solve_sdp, solve_sdp_batch)
from waiter.solvers import lp as hsde
from waiter.solvers.checks import qp_kkt_residuals, sdp_residuals
from waiter.solvers.dump import read_qp, write_qp, write_sdpa
from waiter.solvers.random_problems import random_qp, random_sdp


# ---------------------------------------------------------------- QP

def test_qp_min_norm_with_equality():
    r = solve_qp(QuadProgram(2 * np.eye(3), np.zeros(3), Aeq=[[1, 0, 0]], beq=[1]))
    assert r.ok
    np.testing.assert_allclose(r.x, [1, 0, 0], atol=1e-8)


def test_qp_projection_onto_box():
    r = solve_qp(QuadProgram(2 * np.eye(2), [-4, -4], ub=[1, 1]))
    assert r.ok
    np.testing.assert_allclose(r.x, [1, 1], atol=1e-8)


def test_qp_infeasible_has_certificate():
    # x1 <= -1 and x1 >= 1
    prob = QuadProgram(np.eye(2), np.zeros(2), Ain=[[1, 0], [-1, 0]], bin=[-1, -1])
    r = solve_qp(prob)
    assert r.status == INFEASIBLE
    z = r.certificate["z"]
    G, h = prob.inequality_rows()
    assert np.all(z >= -1e-12)
    assert np.linalg.norm(G.T @ z) < 1e-8
    assert h @ z < -1e-8


def test_qp_rejects_indefinite():
    with pytest.raises(ValueError):
        QuadProgram(np.diag([1.0, -1.0]), np.zeros(2))


def test_qp_tiny_negative_eigenvalue_is_floored():
    P = np.diag([1.0, -1e-13])
    prob = QuadProgram(P, np.zeros(2))
    assert np.linalg.eigvalsh(prob.P).min() >= 0


def test_random_qps_recover_constructed_solution():
    rng = np.random.default_rng(3)
    for _ in range(100):
        prob, x_star = random_qp(rng)
        r = solve_qp(prob)
        assert r.ok
        assert np.abs(r.x - x_star).max() < 1e-6
        assert qp_kkt_residuals(prob, r.x, r.y, r.z)["max"] < 1e-6


def test_qp_nearly_dependent_active_rows():
    # two active constraints a few 1e-4 apart in direction: x is ill-determined by the interior iterate alone
    x_star = np.array([1.0, -0.5, 0.3])
    G = np.array([[1.0, 1.0, 0.0], [1.0, 1.0 + 5e-4, 0.0], [0.0, 0.0, 1.0]])
    h = G @ x_star + np.array([0.0, 0.0, 1.0])
    z = np.array([1.0, 0.7, 0.0])
    P = np.diag([2.0, 1.0, 3.0])
    q = -(P @ x_star + G.T @ z)
    r = solve_qp(QuadProgram(P, q, Ain=G, bin=h))
    assert r.ok and np.abs(r.x - x_star).max() < 1e-9


def test_sparse_and_dense_qp_agree():
    import scipy.sparse as sp
    rng = np.random.default_rng(4)
    prob, _ = random_qp(rng, n=6)
    sparse = QuadProgram(sp.csc_matrix(prob.P), prob.q, sp.csr_matrix(prob.Aeq), prob.beq,
                         sp.csr_matrix(prob.Ain), prob.bin)
    np.testing.assert_allclose(solve_qp(prob).x, solve_qp(sparse).x, atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_qp_optimal_points_pass_independent_checker(seed):
    prob, _ = random_qp(np.random.default_rng(seed))
    r = solve_qp(prob)
    assert r.ok
    assert qp_kkt_residuals(prob, r.x, r.y, r.z)["max"] < 1e-6


def test_qp_dump_roundtrip(tmp_path):
    prob, _ = random_qp(np.random.default_rng(5))
    write_qp(prob, tmp_path / "qp.txt")
    back = read_qp(tmp_path / "qp.txt")
    np.testing.assert_allclose(solve_qp(back).x, solve_qp(prob).x, atol=1e-10)


# ---------------------------------------------------------------- LP

def test_lp_zero_force_feasible():
    # zeta >= 0 with N zeta = 0 has the feasible point zeta = 0
    N = np.array([[1.0, 2.0, 0.5]])
    r = solve_lp(np.zeros(3), Aeq=N, beq=[0.0], lb=np.zeros(3))
    assert r.ok


def test_lp_small_max():
    r = solve_lp([-1, 0], Ain=[[1, 1]], bin=[1], lb=[0, 0])
    assert r.ok
    assert abs(-r.objective - 1) < 1e-8


def _vertex_enumeration(c, G, h):
    n = c.size
    best = np.inf
    for rows in itertools.combinations(range(G.shape[0]), n):
        A = G[list(rows)]
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        v = np.linalg.solve(A, h[list(rows)])
        if np.all(G @ v <= h + 1e-9):
            best = min(best, c @ v)
    return best


def test_lp_matches_vertex_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(150):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(n + 1, 8))
        G = rng.standard_normal((m, n))
        x0 = rng.standard_normal(n)
        h = G @ x0 + rng.uniform(0.1, 1.0, m)
        # add a bounding box so every LP has a finite optimum
        G = np.vstack([G, np.eye(n), -np.eye(n)])
        h = np.concatenate([h, np.full(2 * n, 5.0)])
        c = rng.standard_normal(n)
        r = hsde.solve_lp(c, G=G, h=h)
        assert r.ok
        assert abs(r.objective - _vertex_enumeration(c, G, h)) < 1e-8


def test_lp_infeasible_and_unbounded_certificates():
    G = np.array([[1.0], [-1.0]])
    r = hsde.solve_lp([0.0], G=G, h=[-1.0, -1.0])
    assert r.status == INFEASIBLE
    z = r.certificate["z"]
    assert np.all(z >= 0) and abs(G.T @ z).max() < 1e-8 and np.array([-1.0, -1.0]) @ z < 0
    r = hsde.solve_lp([-1.0], G=[[-1.0]], h=[0.0])
    assert r.status == UNBOUNDED
    assert r.certificate["x"][0] > 0


# ---------------------------------------------------------------- SDP

def test_sdp_2x2_determinant():
    # max t s.t. [[1, t], [t, 1]] PSD
    F = np.zeros((1, 2, 2))
    F[0, 0, 1] = F[0, 1, 0] = 1
    r = solve_sdp(SdpProblem([-1.0], [PsdBlock(np.eye(2), F)]))
    assert r.ok
    assert abs(r.x[0] - 1) < 1e-6


def test_sdp_min_trace_with_fixed_corner():
    # X = [[x0, x1, x2], [x1, x3, x4], [x2, x4, x5]], min tr X s.t. X11 = 1
    idx = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    F = np.zeros((6, 3, 3))
    for k, (i, j) in enumerate(idx):
        F[k, i, j] = F[k, j, i] = 1
    c = np.array([1, 0, 0, 1, 0, 1.0])
    A = np.zeros((1, 6))
    A[0, 0] = 1
    r = solve_sdp(SdpProblem(c, [PsdBlock(np.zeros((3, 3)), F)], A_eq=A, b_eq=[1.0]))
    assert r.ok
    assert abs(r.objective - 1) < 1e-6


def test_sdp_unbounded_and_infeasible():
    F0 = np.array([[0.0, 1.0], [1.0, 0.0]])
    F = np.zeros((2, 2, 2))
    F[0, 0, 0] = F[1, 1, 1] = 1
    assert solve_sdp(SdpProblem([-1.0, 0.0], [PsdBlock(F0, F)])).status == UNBOUNDED
    bad = SdpProblem([1.0, 1.0], [PsdBlock(F0, F)], G=[[1.0, 0.0]], h=[-1.0])
    assert solve_sdp(bad).status == INFEASIBLE


def test_sdp_rejects_nonfinite_data():
    with pytest.raises(ValueError):
        SdpProblem([np.nan], [PsdBlock(np.eye(2), np.zeros((1, 2, 2)))])


def test_random_sdps_reach_constructed_optimum():
    rng = np.random.default_rng(11)
    for _ in range(60):
        prob, opt = random_sdp(rng)
        r = solve_sdp(prob)
        assert r.status == OPTIMAL
        assert abs(r.objective - opt) <= 1e-6 * (1 + abs(opt))
        res = sdp_residuals(prob, r.x, r.Z, r.z)
        assert res["psd"] <= 1e-7 and res["gap"] <= 1e-6


def test_batch_matches_individual_solves():
    rng = np.random.default_rng(12)
    prob, _ = random_sdp(rng, block_sizes=[4, 3], nvar=5, n_ineq=2)
    C = rng.standard_normal((6, prob.nvar))
    batch = solve_sdp_batch(prob, C)
    for i in range(C.shape[0]):
        single = solve_sdp(SdpProblem(C[i], prob.blocks, G=prob.G, h=prob.h))
        assert batch.status[i] == single.status
        if single.ok:
            assert abs(batch.objective[i] - single.objective) < 1e-7 * (1 + abs(single.objective))


def test_sdp_is_deterministic():
    prob, _ = random_sdp(np.random.default_rng(13))
    a, b = solve_sdp(prob), solve_sdp(prob)
    assert np.array_equal(a.x, b.x)


def test_sdpa_dump_format(tmp_path):
    prob, _ = random_sdp(np.random.default_rng(14), block_sizes=[2], nvar=2, n_ineq=1)
    write_sdpa(prob, tmp_path / "p.dat-s")
    lines = (tmp_path / "p.dat-s").read_text().splitlines()
    assert lines[0] == "2" and lines[1] == "2" and lines[2] == "2 -1"
    entries = [ln.split() for ln in lines[4:]]
    assert all(len(e) == 5 for e in entries)
