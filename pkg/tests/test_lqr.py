import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from albrekht.errors import DetectabilityError, StabilizabilityError
from albrekht.lqr import AREData, care_residual, closed_loop_spectrum, newton_kleinman, solve_care

SQRT3 = np.sqrt(3.0)


def double_integrator(**kw):
    return AREData(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), np.eye(2), np.eye(1), **kw)


def test_double_integrator_closed_form():
    P, K = solve_care(double_integrator())
    np.testing.assert_allclose(P, [[SQRT3, 1.0], [1.0, SQRT3]], atol=1e-12)
    np.testing.assert_allclose(K, [[-1.0, -SQRT3]], atol=1e-12)
    ev = closed_loop_spectrum(double_integrator().F, double_integrator().G, K)
    np.testing.assert_allclose(ev, [-SQRT3 / 2 - 0.5j, -SQRT3 / 2 + 0.5j], atol=1e-12)


@given(
    f=st.floats(-3, 3),
    g=st.floats(0.2, 3).flatmap(lambda v: st.sampled_from([v, -v])),
    q=st.floats(0.01, 5),
    r=st.floats(0.1, 5),
    alpha=st.floats(0, 2),
)
def test_scalar_closed_form(f, g, q, r, alpha):
    # stabilizing root of -a p + 2 f p + q - g^2 p^2 / r = 0
    fs = f - alpha / 2
    p = r * (fs + np.sqrt(fs**2 + g**2 * q / r)) / g**2
    P, K = solve_care(AREData([[f]], [[g]], [[q]], [[r]], alpha=alpha))
    assert P[0, 0] == pytest.approx(p, rel=1e-9)
    assert K[0, 0] == pytest.approx(-g * p / r, rel=1e-9)


def test_random_systems_residual_and_stability(rng):
    for _ in range(30):
        n, m = rng.integers(1, 6), rng.integers(1, 3)
        F = rng.normal(size=(n, n))
        G = rng.normal(size=(n, m))
        A = rng.normal(size=(n, n))
        data = AREData(F, G, A @ A.T + 0.1 * np.eye(n), np.eye(m))
        P, K = solve_care(data)
        assert care_residual(data, P) <= 1e-9 * (1 + np.linalg.norm(P))
        assert np.linalg.eigvals(F + G @ K).real.max() < 0
        np.testing.assert_allclose(P, P.T, atol=1e-12)


def test_discount_is_a_shift(rng):
    for _ in range(10):
        n = rng.integers(1, 4)
        F, G = rng.normal(size=(n, n)), rng.normal(size=(n, 1))
        alpha = rng.uniform(0.1, 2)
        a = AREData(F, G, np.eye(n), np.eye(1), alpha=alpha)
        b = AREData(F - alpha / 2 * np.eye(n), G, np.eye(n), np.eye(1))
        np.testing.assert_allclose(solve_care(a)[0], solve_care(b)[0], atol=1e-10)


def test_cross_term_matches_reduced_problem(rng):
    # completing the square: u = v - R^{-1}S'x turns (Q, S) into (Q - S R^{-1} S', 0)
    n, m = 3, 2
    F, G = rng.normal(size=(n, n)), rng.normal(size=(n, m))
    S = 0.2 * rng.normal(size=(n, m))
    R = np.eye(m)
    Q = np.eye(n) + S @ S.T
    P, K = solve_care(AREData(F, G, Q, R, S))
    Pr, Kr = solve_care(AREData(F - G @ S.T, G, Q - S @ S.T, R))
    np.testing.assert_allclose(P, Pr, atol=1e-10)
    np.testing.assert_allclose(K, Kr - S.T, atol=1e-10)


def test_long_horizon_riccati_flow_converges_to_are(rng):
    n = 3
    F, G = rng.normal(size=(n, n)), rng.normal(size=(n, 1))
    data = AREData(F, G, np.eye(n), np.eye(1))

    def rhs(t, p):
        P = p.reshape(n, n)
        dP = P @ F + F.T @ P + np.eye(n) - P @ G @ G.T @ P
        return dP.ravel()

    sol = solve_ivp(rhs, (0, 40), np.zeros(n * n), rtol=1e-11, atol=1e-12)
    P_inf = sol.y[:, -1].reshape(n, n)
    np.testing.assert_allclose(solve_care(data)[0], P_inf, rtol=1e-7, atol=1e-8)


def test_newton_kleinman_agrees_with_schur(rng):
    for _ in range(10):
        n = rng.integers(1, 5)
        F, G = rng.normal(size=(n, n)), rng.normal(size=(n, 2))
        data = AREData(F, G, np.eye(n), np.eye(2))
        P_nk, _ = newton_kleinman(data)
        np.testing.assert_allclose(P_nk, solve_care(data)[0], atol=1e-9)


def test_unstabilizable_pair_is_rejected():
    F = np.diag([1.0, -1.0])
    G = np.array([[0.0], [1.0]])
    with pytest.raises(StabilizabilityError):
        solve_care(AREData(F, G, np.eye(2), np.eye(1)))


def test_undetectable_pair_is_rejected():
    F = np.diag([1.0, -1.0])
    G = np.eye(2)[:, :1] + np.eye(2)[:, 1:]
    with pytest.raises(DetectabilityError):
        solve_care(AREData(F, G, np.diag([0.0, 1.0]), np.eye(1)))


def test_invalid_data():
    with pytest.raises(ValueError):
        AREData(np.eye(2), np.ones((2, 1)), np.eye(2), -np.eye(1))
    with pytest.raises(ValueError):
        AREData(np.eye(2), np.ones((2, 1)), np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))
    with pytest.raises(ValueError):
        AREData(np.eye(2), np.ones((3, 1)), np.eye(2), np.eye(1))


def test_scalar_example_and_diagonal_spectrum():
    P, K = solve_care(AREData([[0.0]], [[1.0]], [[1.0]], [[1.0]]))
    assert P[0, 0] == pytest.approx(1.0) and K[0, 0] == pytest.approx(-1.0)
    ev = closed_loop_spectrum(np.diag([-1.0, -2.0]), np.zeros((2, 1)), np.zeros((1, 2)))
    np.testing.assert_array_equal(ev, [-2.0, -1.0])
