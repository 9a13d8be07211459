"""Finite-horizon stochastic Riccati equation and its degree-3 correction.

Backward in time from P(T) = P_T,

    -dP/dt = -alpha P + P F + F'P + Qbar(P) - (P G + Sbar(P)) Rbar(P)^{-1} (G'P + Sbar(P)')

with the same noise-corrected Qbar, Rbar, Sbar as the stationary problem, and
K(t) = -Rbar^{-1}(G'P + Sbar').  The cubic value correction pi3(t, x) obeys
the linear equation

    -d pi3/dt = L_t pi3 + rhs_t,   pi3(T) = pi_T3,

where L_t is the degree-3 operator built from F+GK and C_k+D_kK at time t and
rhs_t collects the cubic terms generated by f2, gamma2 and l3.  Both are
integrated with fixed-step classical RK4.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, NumericalError
from .hjb import NonlinearProblem, _gain_equation, _Model, _value_equation, quadratic_form
from .poly import HomPoly, PolySeries, enumerate_basis, hessian_form, partial
from .sare import LQGBData

BLOWUP = 1e12


def _as_problem(x) -> NonlinearProblem:
    if isinstance(x, NonlinearProblem):
        return x
    if isinstance(x, LQGBData):
        return NonlinearProblem(x, degree_cap=3)
    raise TypeError(f"sampler returned {type(x).__name__}, expected NonlinearProblem or LQGBData")


@dataclass(frozen=True, eq=False)
class TimeVaryingProblem:
    """Data sampled on [0, T] plus terminal cost x'P_T x/2 + pi_T3(x)."""

    sampler: Callable[[float], NonlinearProblem]
    T: float
    P_T: np.ndarray
    pi_T3: HomPoly | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        P_T = np.asarray(self.P_T, dtype=float)
        probe = self.at(0.0)
        n = probe.n
        if P_T.shape != (n, n):
            raise ValueError(f"P_T has shape {P_T.shape}, expected {(n, n)}")
        object.__setattr__(self, "P_T", P_T)
        if self.pi_T3 is not None and (self.pi_T3.nvars != n or self.pi_T3.degree != 3):
            raise ValueError("pi_T3 must be a cubic in the state variables")

    @classmethod
    def constant(cls, data, T: float, P_T=None, pi_T3=None) -> "TimeVaryingProblem":
        prob = _as_problem(data)
        P_T = np.zeros((prob.n, prob.n)) if P_T is None else P_T
        return cls(lambda t: prob, T, P_T, pi_T3)

    def at(self, t: float) -> NonlinearProblem:
        return _as_problem(self.sampler(t))

    @property
    def n(self):
        return self.P_T.shape[0]


class TableSampler:
    """Piecewise-linear interpolation of the matrices of problems given at nodes.

    Higher-degree terms are taken from the node at or before ``t``.
    """

    def __init__(self, times: Sequence[float], problems: Sequence):
        self.times = np.asarray(times, dtype=float)
        if len(self.times) != len(problems) or len(self.times) == 0:
            raise ValueError("need one problem per table time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("table times must be strictly increasing")
        self.problems = [_as_problem(p) for p in problems]

    def __call__(self, t: float) -> NonlinearProblem:
        ts = self.times
        if len(ts) == 1 or t <= ts[0]:
            return self.problems[0]
        if t >= ts[-1]:
            return self.problems[-1]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        a, b = self.problems[i], self.problems[i + 1]
        la, lb = a.lin, b.lin
        mix = lambda x, y: (1 - w) * x + w * y
        base = la.base.replace(
            F=mix(la.base.F, lb.base.F), G=mix(la.base.G, lb.base.G), Q=mix(la.base.Q, lb.base.Q),
            R=mix(la.base.R, lb.base.R), S=mix(la.base.S, lb.base.S), alpha=mix(la.base.alpha, lb.base.alpha),
        )
        lin = LQGBData(base, [mix(x, y) for x, y in zip(la.C, lb.C)], [mix(x, y) for x, y in zip(la.D, lb.D)])
        return a.with_lin(lin)


@dataclass
class SDRETrajectory:
    grid: np.ndarray
    P: list[np.ndarray]
    K: list[np.ndarray]
    pi3: list[HomPoly] | None = None
    kappa2: list[tuple[HomPoly, ...]] | None = None

    def to_csv(self) -> str:
        n = self.P[0].shape[0]
        m = self.K[0].shape[0]
        head = ["t"] + [f"P{i}{j}" for i in range(n) for j in range(n)] + [f"K{i}{j}" for i in range(m) for j in range(n)]
        cubic = enumerate_basis(n, 3)
        quad = enumerate_basis(n, 2)
        if self.pi3 is not None:
            head += ["pi3_" + "".join(map(str, e)) for e in cubic]
            head += [f"kappa2_{j}_" + "".join(map(str, e)) for j in range(m) for e in quad]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        for i, t in enumerate(self.grid):
            row = [repr(float(t))] + [repr(float(v)) for v in self.P[i].ravel()] + [repr(float(v)) for v in self.K[i].ravel()]
            if self.pi3 is not None:
                row += [repr(float(v)) for v in self.pi3[i].to_vector()]
                row += [repr(float(v)) for h in self.kappa2[i] for v in h.to_vector()]
            w.writerow(row)
        return buf.getvalue()


def _corrected(lin: LQGBData, P):
    Qb, Rb, Sb = lin.corrected(P)
    return Qb, Rb, Sb


def _gain(lin: LQGBData, P, t):
    _, Rb, Sb = _corrected(lin, P)
    try:
        return -np.linalg.solve(Rb, lin.base.G.T @ P + Sb.T)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"R + sum D'PD is singular at t={t:.6g}") from exc


def riccati_rhs(lin: LQGBData, P, t=0.0) -> np.ndarray:
    """-dP/dt for the stochastic differential Riccati equation."""
    b = lin.base
    Qb, _, Sb = _corrected(lin, P)
    K = _gain(lin, P, t)
    # (PG + Sbar) Rbar^{-1} (G'P + Sbar') = -(PG + Sbar) K
    return -b.alpha * P + P @ b.F + b.F.T @ P + Qb + (P @ b.G + Sb) @ K


def _rk4_step(f, t, y, h):
    """One backward step of size h from time t (y at t, returns y at t - h)."""
    k1 = f(t, y)
    k2 = f(t - h / 2, y + (h / 2) * k1)
    k3 = f(t - h / 2, y + (h / 2) * k2)
    k4 = f(t - h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_blowup(P, t_hi, t_lo):
    if not np.all(np.isfinite(P)) or np.linalg.norm(P) > BLOWUP:
        raise DivergenceError(f"Riccati solution escaped between t={t_lo:.6g} and t={t_hi:.6g}", (t_lo, t_hi))


def integrate_sdre(problem: TimeVaryingProblem, steps: int) -> SDRETrajectory:
    """Fixed-step RK4 sweep from T down to 0; P is symmetrised after every step."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    T = float(problem.T)
    grid = np.linspace(0.0, T, steps + 1)
    h = T / steps
    rhs = lambda t, P: riccati_rhs(problem.at(t).lin, P, t)
    Ps = [None] * (steps + 1)
    Ks = [None] * (steps + 1)
    P = problem.P_T.copy()
    Ps[steps] = P
    Ks[steps] = _gain(problem.at(T).lin, P, T)
    for i in range(steps, 0, -1):
        t = grid[i]
        try:
            Pn = _rk4_step(rhs, t, P, h)
        except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
            if isinstance(exc, NumericalError):
                raise
            raise NumericalError(f"stage failure near t={t:.6g}: {exc}") from exc
        _check_blowup(Pn, t, grid[i - 1])
        P = 0.5 * (Pn + Pn.T)
        Ps[i - 1] = P
        Ks[i - 1] = _gain(problem.at(grid[i - 1]).lin, P, grid[i - 1])
    return SDRETrajectory(grid, Ps, Ks)


class _CubicStage:
    """Degree-3 operator and forcing at one time, with cached operator pieces."""

    def __init__(self, n: int):
        self.n = n
        basis = enumerate_basis(n, 3)
        N = len(basis)
        # p -> p_x e_a e_b' x  and  p -> (e_a e_b' x)' p_xx (e_c e_d' x)
        self.E = np.zeros((n, n, N, N))
        self.H = np.zeros((n, n, n, n, N, N))
        unit = lambda a, b: np.outer(np.eye(n)[a], np.eye(n)[b])
        for col, e in enumerate(basis):
            p = HomPoly.monomial(e, 1.0)
            for a in range(n):
                pa = partial(p, a)
                for b in range(n):
                    xb = HomPoly.monomial(tuple(int(i == b) for i in range(n)), 1.0)
                    self.E[a, b, :, col] = (pa * xb).to_vector() if not pa.is_zero() else 0.0
                    for c in range(n):
                        for d in range(n):
                            self.H[a, b, c, d, :, col] = hessian_form(p, unit(a, b), unit(c, d)).to_vector()
        self._models: dict[int, _Model] = {}

    def model(self, prob: NonlinearProblem) -> _Model:
        key = id(prob)
        if key not in self._models:
            if len(self._models) > 64:
                self._models.clear()
            self._models[key] = (_Model(prob, False), prob)
        return self._models[key][0]

    def operator(self, lin: LQGBData, K) -> np.ndarray:
        b = lin.base
        A = b.F + b.G @ K
        L = np.tensordot(A, self.E, axes=([0, 1], [0, 1]))
        for M in lin.closed_loop_noise(K):
            L = L + 0.5 * np.tensordot(np.multiply.outer(M, M), self.H, axes=([0, 1, 2, 3], [0, 1, 2, 3]))
        return L - b.alpha * np.eye(L.shape[0])

    def forcing(self, prob: NonlinearProblem, P, K) -> np.ndarray:
        model = self.model(prob)
        pi2 = PolySeries(self.n, {2: quadratic_form(P)})
        kappa = [PolySeries(self.n, {1: HomPoly.linear(list(row))}) for row in K]
        return _value_equation(model, pi2, kappa, 3).part(3).to_vector()

    def kappa2(self, prob: NonlinearProblem, P, K, c) -> tuple[HomPoly, ...]:
        model = self.model(prob)
        n = self.n
        pi = PolySeries(n, {2: quadratic_form(P), 3: HomPoly.from_vector(n, 3, c)})
        kappa = [PolySeries(n, {1: HomPoly.linear(list(row))}) for row in K]
        U = _gain_equation(model, pi, kappa, 2)
        known = np.column_stack([u.part(2).to_vector() for u in U])
        _, Rb, _ = prob.lin.corrected(P)
        kap = -np.linalg.solve(Rb, known.T)
        return tuple(HomPoly.from_vector(n, 2, row) for row in np.atleast_2d(kap))


def integrate_pi3(problem: TimeVaryingProblem, steps) -> SDRETrajectory:
    """Integrate (P, pi3) jointly backward and recover kappa2 at every node.

    ``steps`` may also be a trajectory from :func:`integrate_sdre`, whose grid
    is then reused.  The Riccati part is the same RK4 recursion, so the
    returned P, K agree with that trajectory to rounding.
    """
    if isinstance(steps, SDRETrajectory):
        steps = len(steps.grid) - 1
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = problem.n
    T = float(problem.T)
    grid = np.linspace(0.0, T, steps + 1)
    h = T / steps
    stage = _CubicStage(n)
    nP = n * n

    def rhs(t, y):
        prob = problem.at(t)
        P = y[:nP].reshape(n, n)
        c = y[nP:]
        K = _gain(prob.lin, P, t)
        dP = riccati_rhs(prob.lin, P, t)
        dc = stage.operator(prob.lin, K) @ c + stage.forcing(prob, P, K)
        return np.concatenate([dP.ravel(), dc])

    c_T = problem.pi_T3.to_vector() if problem.pi_T3 is not None else np.zeros(len(enumerate_basis(n, 3)))
    y = np.concatenate([problem.P_T.ravel(), c_T])
    Ps, Ks, pis, kaps = [None] * (steps + 1), [None] * (steps + 1), [None] * (steps + 1), [None] * (steps + 1)

    def record(i, y):
        t = grid[i]
        prob = problem.at(t)
        P = y[:nP].reshape(n, n)
        K = _gain(prob.lin, P, t)
        Ps[i], Ks[i] = P, K
        pis[i] = HomPoly.from_vector(n, 3, y[nP:])
        kaps[i] = stage.kappa2(prob, P, K, y[nP:])

    record(steps, y)
    for i in range(steps, 0, -1):
        yn = _rk4_step(rhs, grid[i], y, h)
        _check_blowup(yn[:nP].reshape(n, n), grid[i], grid[i - 1])
        if not np.all(np.isfinite(yn)):
            raise DivergenceError(
                f"cubic correction escaped between t={grid[i - 1]:.6g} and t={grid[i]:.6g}", (grid[i - 1], grid[i])
            )
        Pn = yn[:nP].reshape(n, n)
        yn[:nP] = (0.5 * (Pn + Pn.T)).ravel()
        y = yn
        record(i - 1, y)
    return SDRETrajectory(grid, Ps, Ks, pis, kaps)
