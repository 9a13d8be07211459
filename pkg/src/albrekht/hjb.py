"""Power-series solution of the infinite-horizon stochastic HJB equations.

For dynamics dx = f(x,u) dt + sum_k gamma_k(x,u) dw_k with f, gamma_k
vanishing at the origin and running cost l(x,u), the value pi and feedback
kappa satisfy

    0 = -alpha pi + pi_x f(x,kappa) + l(x,kappa)
        + 1/2 sum_k gamma_k' pi_xx gamma_k                          (value)
    0 = pi_x f_u(x,kappa) + l_u(x,kappa)
        + sum_k gamma_k' pi_xx d(gamma_k)/du                        (gain)

Expanding pi = x'Px/2 + pi[3] + ... and kappa = Kx + kappa[2] + ... the
lowest degrees give the stochastic Riccati equation.  At every higher stage
d the degree d+1 part of the value equation is linear in pi[d+1] through the
operator

    p -> p_x (F+GK) x + 1/2 sum_k x'(C_k+D_kK)' p_xx (C_k+D_kK) x - alpha p

and does not involve kappa[d]; the degree d part of the gain equation then
gives kappa[d] through (R + sum D_k'PD_k)^{-1}.  All right-hand sides are
found by expanding the two equations with the known lower-degree terms and
reading off the target degree.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np
import scipy.linalg as sla

from . import _mp
from .errors import DimensionError, NumericalError, OperatorSingularError
from .poly import (
    DEGREE_CAP,
    PRUNE_RTOL,
    HomPoly,
    PolySeries,
    enumerate_basis,
    hessian_form,
    linear_forms,
    matrix_series,
    partial,
    substitute,
)
from .sare import LQGBData, refine_sare, sare_gain, sare_iterate

log = logging.getLogger(__name__)

ITER_RTOL = 1e-13
ITER_MAX_SWEEPS = 5000
ITER_BLOWUP = 1e8
SINGULAR_RTOL = 1e-10


def _check_series(s: PolySeries, nvars: int, lo: int, hi: int, what: str):
    if s.nvars != nvars:
        raise DimensionError(f"{what} has {s.nvars} variables, expected {nvars}")
    for d in s.terms:
        if not lo <= d <= hi:
            raise DimensionError(f"{what} has a degree-{d} term; allowed degrees are {lo}..{hi}")


@dataclass(frozen=True, eq=False)
class NonlinearProblem:
    """Linear-quadratic-bilinear data plus higher Taylor terms in ``(x, u)``.

    ``f_hi`` holds n series (degrees 2..cap-1), ``gamma_hi`` one such tuple per
    noise channel and ``l_hi`` a scalar series (degrees 3..cap).  The linear
    parts of f and gamma and the quadratic part of l live only in ``lin``.
    """

    lin: LQGBData
    f_hi: Sequence[PolySeries] = ()
    gamma_hi: Sequence[Sequence[PolySeries]] = ()
    l_hi: PolySeries | None = None
    degree_cap: int = DEGREE_CAP

    def __post_init__(self):
        n, m, r = self.lin.n, self.lin.m, self.lin.r
        nz = n + m
        d = self.degree_cap - 1
        if self.degree_cap < 2:
            raise ValueError("degree_cap must be at least 2")
        f_hi = tuple(self.f_hi) or tuple(PolySeries.zero(nz) for _ in range(n))
        if len(f_hi) != n:
            raise DimensionError(f"f_hi has {len(f_hi)} components, expected {n}")
        gamma_hi = tuple(tuple(g) for g in self.gamma_hi) or tuple(
            tuple(PolySeries.zero(nz) for _ in range(n)) for _ in range(r)
        )
        if len(gamma_hi) != r or any(len(g) != n for g in gamma_hi):
            raise DimensionError(f"gamma_hi must hold {r} channels of {n} components")
        l_hi = self.l_hi if self.l_hi is not None else PolySeries.zero(nz)
        for i, s in enumerate(f_hi):
            _check_series(s, nz, 2, d, f"f_hi[{i}]")
        for k, g in enumerate(gamma_hi):
            for i, s in enumerate(g):
                _check_series(s, nz, 2, d, f"gamma_hi[{k}][{i}]")
        _check_series(l_hi, nz, 3, d + 1, "l_hi")
        object.__setattr__(self, "f_hi", f_hi)
        object.__setattr__(self, "gamma_hi", gamma_hi)
        object.__setattr__(self, "l_hi", l_hi)

    @property
    def n(self):
        return self.lin.n

    @property
    def m(self):
        return self.lin.m

    @property
    def r(self):
        return self.lin.r

    def with_lin(self, lin: LQGBData) -> "NonlinearProblem":
        return NonlinearProblem(lin, self.f_hi, self.gamma_hi, self.l_hi, self.degree_cap)

    def with_cap(self, cap: int) -> "NonlinearProblem":
        d = cap - 1
        return NonlinearProblem(
            self.lin,
            [s.truncate(d) for s in self.f_hi],
            [[s.truncate(d) for s in g] for g in self.gamma_hi],
            self.l_hi.truncate(d + 1),
            cap,
        )

    def noiseless(self) -> "NonlinearProblem":
        return NonlinearProblem(self.lin.noiseless(), self.f_hi, (), self.l_hi, self.degree_cap)


def _map_coeffs(s: PolySeries, fn) -> PolySeries:
    return PolySeries(
        s.nvars, {d: HomPoly(h.nvars, h.degree, {e: fn(c) for e, c in h.coeffs.items()}) for d, h in s.terms.items()}
    )


def quadratic_form(W) -> HomPoly:
    """The polynomial z -> z'Wz / 2 for symmetric W."""
    W = np.asarray(W)
    nz = W.shape[0]
    coeffs = {}
    for i in range(nz):
        for j in range(i, nz):
            e = [0] * nz
            e[i] += 1
            e[j] += 1
            c = W[i, j] / 2 if i == j else (W[i, j] + W[j, i]) / 2
            coeffs[tuple(e)] = c
    return HomPoly(nz, 2, coeffs)


class _Model:
    """Full (x, u) series of f, gamma, l and their u-derivatives in one number type."""

    def __init__(self, problem: NonlinearProblem, mp: bool):
        lin, b = problem.lin, problem.lin.base
        self.n, self.m, self.r = lin.n, lin.m, lin.r
        self.mp = mp
        conv = _mp.to_mp if mp else (lambda a: np.asarray(a, float))
        scal = mpmath.mpf if mp else float
        self.conv, self.scal = conv, scal
        self.F, self.G, self.Q, self.R, self.S = (conv(a) for a in (b.F, b.G, b.Q, b.R, b.S))
        self.C = [conv(c) for c in lin.C]
        self.D = [conv(d) for d in lin.D]
        self.alpha = scal(b.alpha)
        self.half = scal(1) / 2
        n, m = self.n, self.m
        nz = n + m
        hi = lambda s: _map_coeffs(s, scal)
        lin_f = matrix_series(self.F, self.G)
        self.f = [lin_f[i] + hi(problem.f_hi[i]) for i in range(n)]
        self.gamma = []
        for k in range(self.r):
            lin_g = matrix_series(self.C[k], self.D[k])
            self.gamma.append([lin_g[i] + hi(problem.gamma_hi[k][i]) for i in range(n)])
        W = np.block([[self.Q, self.S], [self.S.T, self.R]])
        self.l = PolySeries(nz, {2: quadratic_form(W)}) + hi(problem.l_hi)
        self.f_u = [[s.partial(n + j) for j in range(m)] for s in self.f]
        self.gamma_u = [[[s.partial(n + j) for j in range(m)] for s in g] for g in self.gamma]
        self.l_u = [self.l.partial(n + j) for j in range(m)]


def _grad_hess(pi: PolySeries):
    n = pi.nvars
    grad = [pi.partial(i) for i in range(n)]
    hess = [[grad[i].partial(j) for j in range(n)] for i in range(n)]
    return grad, hess


def _value_equation(model: _Model, pi: PolySeries, kappa: Sequence[PolySeries], cap: int) -> PolySeries:
    """Degree <= cap expansion of the value equation along u = kappa(x)."""
    n = model.n
    grad, hess = _grad_hess(pi)
    sub = lambda s, c=cap: substitute(s, kappa, c)
    H = pi.scale(-model.alpha) if model.alpha != 0 else PolySeries.zero(n)
    for i in range(n):
        H = H + grad[i].mul(sub(model.f[i], cap - 1), cap)
    H = H + sub(model.l)
    for g in model.gamma:
        gs = [sub(s, cap - 1) for s in g]
        for i in range(n):
            acc = PolySeries.zero(n)
            for j in range(n):
                acc = acc + hess[i][j].mul(gs[j], cap - 1)
            H = H + gs[i].mul(acc, cap).scale(model.half)
    return H.truncate(cap)


def _gain_equation(model: _Model, pi: PolySeries, kappa: Sequence[PolySeries], cap: int) -> list[PolySeries]:
    """Degree <= cap expansion of the m gain-equation components."""
    n, m = model.n, model.m
    grad, hess = _grad_hess(pi)
    sub = lambda s: substitute(s, kappa, cap)
    out = []
    gs = [[sub(s) for s in g] for g in model.gamma]
    for j in range(m):
        U = sub(model.l_u[j])
        for i in range(n):
            U = U + grad[i].mul(sub(model.f_u[i][j]), cap)
        for k, g in enumerate(gs):
            gu = [sub(model.gamma_u[k][i][j]) for i in range(n)]
            for i in range(n):
                acc = PolySeries.zero(n)
                for i2 in range(n):
                    acc = acc + hess[i][i2].mul(gu[i2], cap)
                U = U + g[i].mul(acc, cap)
        out.append(U.truncate(cap))
    return out


# operators ------------------------------------------------------------------

def _dtype(a):
    return object if _mp.is_mp(a) else float


def build_deterministic_operator(A, d: int) -> np.ndarray:
    """Matrix of p -> dp/dx(x) A x on degree-d coefficients (graded-lex order)."""
    A = np.asarray(A)
    n = A.shape[0]
    forms = linear_forms(A)
    cols = []
    for e in enumerate_basis(n, d):
        p = HomPoly.monomial(e, 1)
        img = HomPoly.zero(n, d)
        for i in range(n):
            if e[i] and not forms[i].is_zero():
                img = img + partial(p, i) * forms[i]
        cols.append(img.to_vector(_dtype(A)))
    return np.column_stack(cols)


def build_noise_operator(Ms: Sequence, d: int, n: int | None = None) -> np.ndarray:
    """Matrix of p -> 1/2 sum_k (M_k x)' d2p/dx2(x) (M_k x) on degree-d coefficients."""
    Ms = [np.asarray(M) for M in Ms]
    if n is None:
        if not Ms:
            raise ValueError("need n when no noise matrices are given")
        n = Ms[0].shape[0]
    like = Ms[0] if Ms else np.zeros(1)
    basis = enumerate_basis(n, d)
    if not Ms:
        return np.zeros((len(basis), len(basis)))
    cols = []
    half = _mp.to_mp(0.5)[()] if _mp.is_mp(like) else 0.5
    for e in basis:
        p = HomPoly.monomial(e, 1)
        img = HomPoly.zero(n, d)
        for M in Ms:
            img = img + hessian_form(p, M, M)
        cols.append(img.scale(half).to_vector(_dtype(like)))
    return np.column_stack(cols)


def _degree_operator(model: _Model, K, d: int):
    A = model.F + model.G @ K
    Ms = [c + dk @ K for c, dk in zip(model.C, model.D)]
    M = build_deterministic_operator(A, d)
    N = build_noise_operator(Ms, d, model.n)
    I = _mp.eye(M.shape[0], M)
    return M, N, M + N - model.alpha * I


@dataclass
class InvertibilityCertificate:
    degree: int
    tau: float
    sigma: float
    r: int
    rho: float
    margin: float
    degree_margin: float
    smallest_singular_value: float
    largest_singular_value: float
    invertible: bool

    @property
    def margin_positive(self) -> bool:
        return self.margin > 0

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.__dict__.items()}


def lemma1_certificate(lin: LQGBData, P, K, d: int) -> InvertibilityCertificate:
    """Spectral margins of the degree-d operator together with its singular values.

    tau is minus the spectral abscissa of F+GK, sigma the largest 2-norm of
    C_k + D_k K and rho the 2-norm of the inverse of the noiseless operator.
    ``margin`` is tau - r sigma^2/2.  ``degree_margin`` is
    tau - (d-1) r sigma^2/2, which uses the noise-operator norm
    d(d-1) r sigma^2/2 attained when every C_k + D_k K is a multiple of the
    identity; the smaller ``margin`` can be positive for singular operators
    (scalar example: F+GK = -1/2, C = sqrt(1/2), d = 3).  ``invertible`` is
    decided by the singular values alone: the smallest must exceed 1e-10
    times the size of the deterministic and noise parts.
    """
    b = lin.base
    K = np.atleast_2d(_mp.to_float(K))
    A = b.F + b.G @ K
    tau = float(-np.linalg.eigvals(A).real.max())
    Ms = lin.closed_loop_noise(K)
    sigma = max((float(np.linalg.norm(M, 2)) for M in Ms), default=0.0)
    margin = tau - lin.r * sigma**2 / 2
    degree_margin = tau - (d - 1) * lin.r * sigma**2 / 2
    M = build_deterministic_operator(A, d)
    N = build_noise_operator(Ms, d, lin.n)
    sv_M = np.linalg.svd(M - b.alpha * np.eye(M.shape[0]), compute_uv=False)
    if sv_M[-1] <= 1e-14 * max(sv_M[0], 1.0):
        raise NumericalError(f"noiseless degree-{d} operator is singular; F+GK is not stabilizing")
    rho = float(1.0 / sv_M[-1])
    sv = np.linalg.svd(M + N - b.alpha * np.eye(M.shape[0]), compute_uv=False)
    smin, smax = float(sv[-1]), float(sv[0])
    # scale by the parts, not the sum: a 1x1 sum has smin == smax
    scale = max(smax, sv_M[0], float(np.linalg.norm(N, 2)) if N.size else 0.0, 1e-300)
    invertible = smin > SINGULAR_RTOL * scale
    return InvertibilityCertificate(d, tau, sigma, lin.r, rho, margin, degree_margin, smin, smax, bool(invertible))


# solution container ----------------------------------------------------------

@dataclass
class SeriesSolution:
    P: np.ndarray
    K: np.ndarray
    pi_hi: dict[int, HomPoly] = field(default_factory=dict)
    kappa_hi: dict[int, tuple[HomPoly, ...]] = field(default_factory=dict)
    certificates: dict[int, InvertibilityCertificate] = field(default_factory=dict)
    method: str = "direct"
    sweeps: dict[int, int] = field(default_factory=dict)

    @property
    def n(self):
        return np.asarray(self.P).shape[0]

    @property
    def m(self):
        return np.atleast_2d(self.K).shape[0]

    @property
    def max_degree(self) -> int:
        """Degree of the highest value term."""
        return max(self.pi_hi, default=2)

    def pi_series(self, max_degree: int | None = None) -> PolySeries:
        homs = [quadratic_form(self.P)]
        homs += [h for d, h in self.pi_hi.items() if max_degree is None or d <= max_degree]
        return PolySeries.from_homs(self.n, homs)

    def kappa_series(self, max_degree: int | None = None) -> list[PolySeries]:
        K = np.atleast_2d(self.K)
        out = []
        for j in range(self.m):
            homs = [HomPoly.linear(list(K[j]))]
            homs += [t[j] for d, t in self.kappa_hi.items() if max_degree is None or d <= max_degree]
            out.append(PolySeries.from_homs(self.n, homs))
        return out

    def value(self, x):
        return self.pi_series().evaluate(list(x))

    def feedback(self, x, max_degree: int | None = None):
        return [s.evaluate(list(x)) for s in self.kappa_series(max_degree)]

    def as_float(self) -> "SeriesSolution":
        fl = lambda h: HomPoly(h.nvars, h.degree, {e: float(c) for e, c in h.coeffs.items()})
        return SeriesSolution(
            _mp.to_float(self.P),
            _mp.to_float(self.K),
            {d: fl(h) for d, h in self.pi_hi.items()},
            {d: tuple(fl(h) for h in t) for d, t in self.kappa_hi.items()},
            dict(self.certificates),
            self.method,
            dict(self.sweeps),
        )

    def parity_violation(self) -> float:
        """Largest odd-degree value coefficient or even-degree feedback coefficient."""
        vals = [abs(float(c)) for d, h in self.pi_hi.items() if d % 2 for c in h.coeffs.values()]
        vals += [abs(float(c)) for d, t in self.kappa_hi.items() if d % 2 == 0 for h in t for c in h.coeffs.values()]
        return max(vals, default=0.0)

    def to_dict(self) -> dict:
        s = self.as_float()
        return {
            "n": s.n,
            "m": s.m,
            "P": s.P.tolist(),
            "K": np.atleast_2d(s.K).tolist(),
            "pi": [{"degree": d, "terms": h.to_records()} for d, h in sorted(s.pi_hi.items())],
            "kappa": [
                {"degree": d, "component": j, "terms": h.to_records()}
                for d, t in sorted(s.kappa_hi.items())
                for j, h in enumerate(t)
            ],
            "method": s.method,
            "certificates": {str(d): c.to_dict() for d, c in s.certificates.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeriesSolution":
        n = int(data["n"])
        m = int(data["m"])
        P = np.array(data["P"], dtype=float).reshape(n, n)
        K = np.array(data["K"], dtype=float).reshape(m, n)
        pi_hi = {int(b["degree"]): HomPoly.from_records(n, int(b["degree"]), b["terms"]) for b in data.get("pi", [])}
        kap: dict[int, list] = {}
        for b in data.get("kappa", []):
            d = int(b["degree"])
            kap.setdefault(d, [HomPoly.zero(n, d) for _ in range(m)])
            kap[d][int(b["component"])] = HomPoly.from_records(n, d, b["terms"])
        certs = {int(k): InvertibilityCertificate(**v) for k, v in data.get("certificates", {}).items()}
        return cls(P, K, pi_hi, {d: tuple(v) for d, v in kap.items()}, certs, data.get("method", "direct"))

    def report(self, names: Sequence[str] | None = None, digits: int = 4) -> str:
        """Coefficient listing, degree by degree, monomials in graded-lex order."""
        n = self.n
        names = list(names) if names else [f"x{i + 1}" for i in range(n)]

        def mono(e):
            parts = []
            for nm, k in zip(names, e):
                if k == 1:
                    parts.append(nm)
                elif k > 1:
                    parts.append(f"{nm}^{k}")
            return "*".join(parts) or "1"

        def line(h):
            terms = [f"{float(h.coeffs.get(e, 0.0)):+.{digits}f}*{mono(e)}" for e in enumerate_basis(n, h.degree)]
            return " ".join(terms)

        s = self.as_float()
        out = ["value pi(x):"]
        for d, h in sorted(s.pi_series().terms.items()):
            out.append(f"  [{d}] {line(h)}")
        for j, ks in enumerate(s.kappa_series()):
            out.append(f"feedback kappa_{j + 1}(x):")
            for d, h in sorted(ks.terms.items()):
                out.append(f"  [{d}] {line(h)}")
        return "\n".join(out)


# solver ---------------------------------------------------------------------

def _solve_linear_stage(model: _Model, K, d_pi: int, rhs_vec, method: str, tol=ITER_RTOL, max_sweeps=ITER_MAX_SWEEPS):
    """Coefficients c of pi[d_pi] with (M + N - alpha I) c = -rhs.

    The iterative method sweeps (M - alpha I) c_new = -(rhs + N c_old) from
    c = 0.  It stops once the predicted distance to the fixed point,
    |dc| q / (1 - q) with q the observed contraction ratio, drops below
    ``tol`` times |c|.
    """
    M, N, L = _degree_operator(model, K, d_pi)
    if method == "direct":
        return _mp.solve(L, -rhs_vec), 0
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")
    Mdet = M - model.alpha * _mp.eye(M.shape[0], M)
    if _mp.is_mp(Mdet) or _mp.is_mp(rhs_vec):
        solve = lambda b: _mp.solve(Mdet, b)
    else:
        lu = sla.lu_factor(Mdet)
        solve = lambda b: sla.lu_solve(lu, b)
    c = solve(-rhs_vec)
    c0 = _mp.norm(c)
    prev = None
    for sweep in range(1, max_sweeps + 1):
        cn = solve(-(rhs_vec + N @ c))
        delta = _mp.norm(cn - c)
        size = _mp.norm(cn)
        if not np.isfinite(float(size)) or size > ITER_BLOWUP * max(c0, 1e-300):
            raise NumericalError(f"iterative solve for degree {d_pi} diverged after {sweep} sweeps")
        c = cn
        if size == 0 or delta == 0:
            return c, sweep
        if prev is not None and prev > 0:
            q = delta / prev
            if q < 1 and delta * q / (1 - q) <= tol * size:
                return c, sweep
        prev = delta
    raise NumericalError(f"iterative solve for degree {d_pi} did not converge in {max_sweeps} sweeps")


def solve_degree(problem: NonlinearProblem, solution: SeriesSolution, d: int, method: str = "direct", _model=None):
    """Compute (pi[d+1], kappa[d]) given all lower-degree terms in ``solution``.

    Returns the new value term, the tuple of m feedback terms, the
    certificate for the degree-(d+1) operator and the number of sweeps used
    by the iterative method (0 for ``direct``).
    """
    if d < 2:
        raise ValueError("solve_degree starts at d=2; degree 1 is the Riccati stage")
    mp_mode = _mp.is_mp(solution.P)
    model = _model or _Model(problem, mp_mode)
    n = model.n
    P = solution.P
    K = np.atleast_2d(solution.K)
    pi = solution.pi_series(d)
    kappa = solution.kappa_series(d - 1)
    cert = lemma1_certificate(problem.lin, P, K, d + 1)
    if not cert.invertible:
        raise OperatorSingularError(f"degree-{d + 1} operator is singular", cert, d + 1)

    H = _value_equation(model, pi, kappa, d + 1)
    rhs = H.part(d + 1).to_vector(_dtype(P))
    coeffs, sweeps = _solve_linear_stage(model, K, d + 1, rhs, method)
    pi_new = HomPoly.from_vector(n, d + 1, list(coeffs))

    pi_full = pi + PolySeries(n, {d + 1: pi_new})
    U = _gain_equation(model, pi_full, kappa, d)
    known = np.column_stack([u.part(d).to_vector(_dtype(P)) for u in U])
    Rb = model.R + sum((dk.T @ P @ dk for dk in model.D), _mp.zeros(model.R.shape, model.R))
    kap = -_mp.solve(Rb, known.T)  # rows: components, cols: monomials
    kappa_new = tuple(HomPoly.from_vector(n, d, list(np.atleast_2d(kap)[j])) for j in range(model.m))
    return pi_new, kappa_new, cert, sweeps


def _clean(h: HomPoly, mp_mode: bool) -> HomPoly:
    return h if mp_mode else h.normalize(PRUNE_RTOL)


def solve_hjb_series(
    problem: NonlinearProblem,
    method: str = "direct",
    dps: int | None = None,
    degree: int | None = None,
    sare_tol: float = 1e-12,
) -> SeriesSolution:
    """Value to degree ``degree`` (default the problem's cap) and feedback one lower.

    ``method`` selects how each degree's linear system is solved: ``direct``
    factorises the full stochastic operator, ``iterative`` repeatedly solves
    the noiseless operator with the noise term of the previous iterate moved
    to the right-hand side.  ``dps`` switches the whole computation to mpmath
    with that many decimal digits; coefficients are then mpf.
    """
    cap = problem.degree_cap if degree is None else degree
    if cap > problem.degree_cap:
        problem = problem.with_cap(cap)
    res = sare_iterate(problem.lin, tol=sare_tol)
    if not res.converged:
        raise NumericalError(f"degree 2 (Riccati stage): SARE iteration {res.status}: {res.reason}")
    P, K = refine_sare(problem.lin, res.P, dps=dps)
    ctx = mpmath.workdps(dps) if dps else _NullCtx()
    with ctx:
        sol = SeriesSolution(P, np.atleast_2d(K), method=method)
        model = _Model(problem, bool(dps))
        for d in range(2, cap):
            try:
                pi_new, kappa_new, cert, sweeps = solve_degree(problem, sol, d, method, model)
            except OperatorSingularError:
                raise
            except NumericalError as exc:
                raise NumericalError(f"degree {d + 1}: {exc}") from exc
            sol.pi_hi[d + 1] = _clean(pi_new, bool(dps))
            sol.kappa_hi[d] = tuple(_clean(h, bool(dps)) for h in kappa_new)
            sol.certificates[d + 1] = cert
            sol.sweeps[d + 1] = sweeps
    return sol


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


# residuals ------------------------------------------------------------------

class ResidualEvaluator:
    """Pointwise residuals of the value and gain equations for a fixed solution."""

    def __init__(self, problem: NonlinearProblem, solution: SeriesSolution, dps: int | None = None):
        self.dps = dps
        with (mpmath.workdps(dps) if dps else _NullCtx()):
            self.model = _Model(problem, bool(dps))
            if dps and not _mp.is_mp(solution.P):
                raise ValueError("extended-precision residuals need an extended-precision solution")
            sol = solution if dps else solution.as_float()
            self.pi = sol.pi_series()
            self.kappa = sol.kappa_series()
            self.grad, self.hess = _grad_hess(self.pi)

    def __call__(self, x):
        with (mpmath.workdps(self.dps) if self.dps else _NullCtx()):
            m = self.model
            x = [m.scal(v) for v in x]
            u = [s.evaluate(x) for s in self.kappa]
            z = x + u
            n = m.n
            g = [s.evaluate(x) for s in self.grad]
            Hs = [[s.evaluate(x) for s in row] for row in self.hess]
            f = [s.evaluate(z) for s in m.f]
            H = -m.alpha * self.pi.evaluate(x) + sum(gi * fi for gi, fi in zip(g, f)) + m.l.evaluate(z)
            gam = [[s.evaluate(z) for s in ch] for ch in m.gamma]
            for gk in gam:
                H += m.half * sum(gk[i] * Hs[i][j] * gk[j] for i in range(n) for j in range(n))
            U = []
            for j in range(m.m):
                val = m.l_u[j].evaluate(z) + sum(g[i] * m.f_u[i][j].evaluate(z) for i in range(n))
                for k, gk in enumerate(gam):
                    gu = [m.gamma_u[k][i][j].evaluate(z) for i in range(n)]
                    val += sum(gk[i] * Hs[i][i2] * gu[i2] for i in range(n) for i2 in range(n))
                U.append(val)
            return H, U


def hjb_residual(problem: NonlinearProblem, solution: SeriesSolution, x, dps: int | None = None):
    """(value-equation residual, gain-equation residual vector) at the point x."""
    return ResidualEvaluator(problem, solution, dps)(x)


@dataclass
class ResidualProfile:
    radii: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def value_slope(self) -> float:
        return _loglog_slope(self.radii, self.value)

    @property
    def gain_slope(self) -> float:
        return _loglog_slope(self.radii, self.gain)

    def to_dict(self) -> dict:
        return {
            "radii": self.radii.tolist(),
            "value_residual": self.value.tolist(),
            "gain_residual": self.gain.tolist(),
            "value_slope": self.value_slope,
            "gain_slope": self.gain_slope,
        }


def _loglog_slope(r, v) -> float:
    ok = v > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(r[ok]), np.log(v[ok]), 1)[0])


def residual_profile(
    problem: NonlinearProblem,
    solution: SeriesSolution,
    radii=None,
    ndirections: int = 12,
    dps: int | None = None,
) -> ResidualProfile:
    """Largest residuals over a fixed set of directions at each radius.

    Directions are the coordinate axes plus ``ndirections`` seeded random unit
    vectors, so the profile is reproducible.  With a float solution the
    residual bottoms out near 1e-20; use an extended-precision solution and
    ``dps`` to see the true decay at small radii.
    """
    radii = np.logspace(-3, -1, 9) if radii is None else np.asarray(radii, dtype=float)
    n = problem.n
    rng = np.random.default_rng(0)
    dirs = list(np.eye(n)) + [v / np.linalg.norm(v) for v in rng.standard_normal((ndirections, n))]
    ev = ResidualEvaluator(problem, solution, dps)
    val, gain = [], []
    for rad in radii:
        vmax = gmax = 0.0
        for u in dirs:
            H, U = ev(rad * u)
            vmax = max(vmax, abs(float(H)))
            gmax = max(gmax, max((abs(float(x)) for x in U), default=0.0))
        val.append(vmax)
        gain.append(gmax)
    return ResidualProfile(radii, np.array(val), np.array(gain))
