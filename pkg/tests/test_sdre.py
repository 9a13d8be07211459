import numpy as np
import pytest
from scipy.integrate import solve_ivp

from albrekht.errors import DivergenceError
from albrekht.examples import lqgb_example, pendulum
from albrekht.fixtures import load_fixture
from albrekht.hjb import solve_hjb_series
from albrekht.lqr import AREData
from albrekht.poly import HomPoly
from albrekht.sare import LQGBData, sare_iterate
from albrekht.sdre import TableSampler, TimeVaryingProblem, integrate_pi3, integrate_sdre

from conftest import random_nonlinear


def test_terminal_value_and_symmetry():
    P_T = np.array([[2.0, 0.3], [0.3, 1.0]])
    traj = integrate_sdre(TimeVaryingProblem.constant(lqgb_example(), 3.0, P_T), 300)
    assert traj.P[-1] is not P_T and np.array_equal(traj.P[-1], P_T)
    for P in traj.P:
        assert np.linalg.norm(P - P.T) <= 1e-10 * np.linalg.norm(P)
    assert np.all(np.diff(traj.grid) > 0)


def test_long_horizon_limit_is_sare_solution():
    data = lqgb_example()
    traj = integrate_sdre(TimeVaryingProblem.constant(data, 30.0), 3000)
    np.testing.assert_allclose(traj.P[0], sare_iterate(data, tol=1e-12).P, atol=1e-10)


def test_zero_cost_gives_zero_trajectory():
    traj = integrate_sdre(load_fixture("zero_cost").time_varying(), 100)
    assert all(not P.any() for P in traj.P)
    assert all(not K.any() for K in traj.K)


def test_noiseless_matches_reference_ode(rng):
    n = 3
    F, G = rng.normal(size=(n, n)), rng.normal(size=(n, 1))
    data = LQGBData(AREData(F, G, np.eye(n), np.eye(1)))
    T = 2.0
    traj = integrate_sdre(TimeVaryingProblem.constant(data, T), 400)

    def rhs(t, p):
        P = p.reshape(n, n)
        return -(P @ F + F.T @ P + np.eye(n) - P @ G @ G.T @ P).ravel()

    ref = solve_ivp(rhs, (T, 0.0), np.zeros(n * n), rtol=1e-12, atol=1e-13).y[:, -1].reshape(n, n)
    np.testing.assert_allclose(traj.P[0], ref, atol=1e-8)


def test_step_halving_order():
    P_T = np.array([[3.0, -1.0], [-1.0, 2.0]])
    prob = TimeVaryingProblem.constant(lqgb_example(noise=0.3), 2.0, P_T)
    P0 = [integrate_sdre(prob, s).P[0] for s in (10, 20, 40)]
    order = np.log2(np.linalg.norm(P0[1] - P0[0]) / np.linalg.norm(P0[2] - P0[1]))
    assert order >= 3.5


def test_finite_escape_is_bracketed():
    data = LQGBData(AREData(20 * np.eye(1), np.zeros((1, 1)), np.eye(1), np.eye(1)))
    with pytest.raises(DivergenceError) as info:
        integrate_sdre(TimeVaryingProblem.constant(data, 5.0), 100)
    lo, hi = info.value.bracket
    assert 0 <= lo < hi <= 5.0


def test_table_interpolates_matrices():
    a = lqgb_example()
    b = LQGBData(a.base.replace(Q=3 * np.eye(2)), a.C, a.D)
    sampler = TableSampler([0.0, 2.0], [a, b])
    np.testing.assert_allclose(sampler(1.0).lin.base.Q, 2 * np.eye(2))
    np.testing.assert_allclose(sampler(5.0).lin.base.Q, 3 * np.eye(2))


def test_cubic_correction_vanishes_without_higher_terms():
    traj = integrate_pi3(TimeVaryingProblem.constant(lqgb_example(), 2.0), 50)
    assert all(h.is_zero() or h.max_abs() == 0 for h in traj.pi3)
    assert all(k.max_abs() == 0 for t in traj.kappa2 for k in t)


def test_pendulum_cubic_correction_vanishes_by_parity():
    traj = integrate_pi3(TimeVaryingProblem.constant(pendulum(degree_cap=3), 2.0), 100)
    assert max(h.max_abs() for h in traj.pi3) <= 1e-12
    assert max(k.max_abs() for t in traj.kappa2 for k in t) <= 1e-12


def test_cubic_correction_long_horizon_limit():
    rng = np.random.default_rng(7)
    while True:
        prob = random_nonlinear(rng, 2, 1, 1, cap=3, noise=0.1)
        try:
            inf = solve_hjb_series(prob)
        except Exception:
            continue
        if np.linalg.eigvals(prob.lin.base.F + prob.lin.base.G @ inf.K).real.max() < -0.3:
            break
    traj = integrate_pi3(TimeVaryingProblem.constant(prob, 40.0), 800)
    np.testing.assert_allclose(traj.pi3[0].to_vector(), inf.pi_hi[3].to_vector(), atol=1e-4)
    np.testing.assert_allclose(traj.kappa2[0][0].to_vector(), inf.kappa_hi[2][0].to_vector(), atol=1e-4)


def test_terminal_cubic_is_kept():
    pi_T = HomPoly.from_vector(2, 3, [0.1, 0.0, -0.2, 0.3])
    traj = integrate_pi3(TimeVaryingProblem.constant(lqgb_example(), 1.0, np.eye(2), pi_T), 10)
    assert traj.pi3[-1].to_vector().tolist() == pi_T.to_vector().tolist()


def test_trajectory_csv_header():
    traj = integrate_pi3(TimeVaryingProblem.constant(pendulum(degree_cap=3), 0.5, np.zeros((2, 2))), 5)
    head = traj.to_csv().splitlines()[0].split(",")
    assert head[:5] == ["t", "P00", "P01", "P10", "P11"]
    assert head[7:11] == ["pi3_30", "pi3_21", "pi3_12", "pi3_03"]
