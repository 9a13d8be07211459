import numpy as np
import pytest

from albrekht.lqr import AREData
from albrekht.sare import LQGBData


def random_lqgb(rng, n, m, r, noise=0.05, alpha=0.0, cross=False):
    """Random stabilizable LQGB data with small multiplicative noise."""
    F = rng.normal(scale=0.7, size=(n, n))
    G = rng.normal(size=(n, m))
    A = rng.normal(size=(n, n))
    Q = A @ A.T / n + 0.1 * np.eye(n)
    B = rng.normal(size=(m, m))
    R = B @ B.T / m + np.eye(m)
    S = None
    if cross:
        # keep [Q S; S' R] positive definite
        S = 0.3 * np.linalg.cholesky(Q) @ rng.normal(size=(n, m)) / np.sqrt(n)
        S = S * min(1.0, 0.5 / max(np.linalg.norm(S @ np.linalg.inv(np.linalg.cholesky(R)).T, 2), 1e-12))
    C = [noise * rng.normal(size=(n, n)) for _ in range(r)]
    D = [noise * rng.normal(size=(n, m)) for _ in range(r)]
    return LQGBData(AREData(F, G, Q, R, S, alpha), C, D)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_series(rng, nvars, degrees, scale):
    from albrekht.poly import HomPoly, PolySeries, enumerate_basis

    homs = [HomPoly.from_vector(nvars, d, scale * rng.normal(size=len(enumerate_basis(nvars, d)))) for d in degrees]
    return PolySeries.from_homs(nvars, homs)


def random_nonlinear(rng, n, m, r, cap=4, noise=0.05, scale=0.3):
    """Random LQGB data plus small higher-degree terms in f, gamma and l."""
    from albrekht.hjb import NonlinearProblem

    lin = random_lqgb(rng, n, m, r, noise=noise)
    nz = n + m
    f = [random_series(rng, nz, range(2, cap), scale) for _ in range(n)]
    gamma = [[random_series(rng, nz, range(2, cap), scale * noise) for _ in range(n)] for _ in range(r)]
    # quartic and higher cost terms would need sign care; keep l_hi cubic
    l = random_series(rng, nz, [3], scale)
    return NonlinearProblem(lin, f, gamma, l, cap)


def singular_scalar_problem():
    """Scalar data whose degree-3 operator is exactly singular although tau > r sigma^2 / 2.

    SARE solution p = 1/4, closed loop -1/2, noise sqrt(1/2): on x^3 the
    operator is 3(-1/2) + 3(1/2) = 0.
    """
    from albrekht.hjb import NonlinearProblem
    from albrekht.poly import HomPoly, PolySeries

    lin = LQGBData.from_matrices([[-0.25]], [[1.0]], [[0.0625]], [[1.0]], None, [[[np.sqrt(0.5)]]], [[[0.0]]])
    f = [PolySeries.from_homs(2, [HomPoly.monomial((2, 0), 1.0)])]
    return NonlinearProblem(lin, f, (), None, 4)
