"""Stochastic algebraic Riccati equation for linear dynamics with bilinear noise.

Problem: minimise E int e^{-alpha t} (x'Qx + 2x'Su + u'Ru)/2 dt subject to

    dx = (F x + G u) dt + sum_k (C_k x + D_k u) dw_k.

The value is x'Px/2 and the optimal feedback u = Kx, where with

    Rbar = R + sum_k D_k' P D_k,    Sbar = S + sum_k C_k' P D_k,
    Qbar = Q + sum_k C_k' P C_k,

P solves the deterministic-looking ARE with (Qbar, Rbar, Sbar) and
K = -Rbar^{-1} (G'P + Sbar').  The fixed-point iteration below freezes the
noise corrections at the previous iterate and re-solves that ARE.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AlbrekhtError, DimensionError, NumericalError
from .lqr import AREData, solve_care

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200
DIVERGENCE_FACTOR = 1e8


@dataclass(frozen=True, eq=False)
class LQGBData:
    base: AREData
    C: Sequence[np.ndarray] = ()
    D: Sequence[np.ndarray] = ()

    def __post_init__(self):
        n, m = self.base.n, self.base.m
        C = [np.atleast_2d(np.asarray(c, dtype=float)) for c in self.C]
        D = [np.asarray(d, dtype=float).reshape(n, m) for d in self.D]
        if len(D) == 0 and len(C) > 0:
            D = [np.zeros((n, m)) for _ in C]
        if len(C) == 0 and len(D) > 0:
            C = [np.zeros((n, n)) for _ in D]
        if len(C) != len(D):
            raise DimensionError(f"{len(C)} state noise matrices but {len(D)} control noise matrices")
        for k, c in enumerate(C):
            if c.shape != (n, n):
                raise DimensionError(f"C[{k}] has shape {c.shape}, expected {(n, n)}")
        object.__setattr__(self, "C", tuple(C))
        object.__setattr__(self, "D", tuple(D))

    @classmethod
    def from_matrices(cls, F, G, Q, R, S=None, C=(), D=(), alpha=0.0) -> "LQGBData":
        return cls(AREData(F, G, Q, R, S, alpha), C, D)

    @property
    def n(self):
        return self.base.n

    @property
    def m(self):
        return self.base.m

    @property
    def r(self):
        return len(self.C)

    def noiseless(self) -> "LQGBData":
        return LQGBData(self.base)

    def scale_noise(self, s: float) -> "LQGBData":
        return LQGBData(self.base, [s * c for c in self.C], [s * d for d in self.D])

    def corrected(self, P) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(Qbar, Rbar, Sbar) with the noise terms evaluated at ``P``."""
        b = self.base
        Qb = b.Q + sum((c.T @ P @ c for c in self.C), np.zeros_like(b.Q))
        Rb = b.R + sum((d.T @ P @ d for d in self.D), np.zeros_like(b.R))
        Sb = b.S + sum((c.T @ P @ d for c, d in zip(self.C, self.D)), np.zeros_like(b.S))
        return 0.5 * (Qb + Qb.T), 0.5 * (Rb + Rb.T), Sb

    def closed_loop_noise(self, K) -> list[np.ndarray]:
        return [c + d @ K for c, d in zip(self.C, self.D)]


def sare_gain(data: LQGBData, P) -> np.ndarray:
    """K = -(R + sum D'PD)^{-1} (G'P + S' + sum D'PC) for the given P."""
    _, Rb, Sb = data.corrected(P)
    return -np.linalg.solve(Rb, data.base.G.T @ P + Sb.T)


def sare_residual(data: LQGBData, P, K) -> float:
    """Frobenius residual of the value equation plus that of the gain equation.

    The value equation is written in closed-loop form,

        -aP + (F+GK)'P + P(F+GK) + Q + SK + K'S' + K'RK
            + sum (C_k + D_k K)' P (C_k + D_k K),

    which at the optimal K equals -aP + PF + F'P + Qbar - K'Rbar K.
    """
    b = data.base
    P = np.asarray(P, float)
    K = np.atleast_2d(np.asarray(K, float))
    Acl = b.F + b.G @ K
    E = (
        -b.alpha * P
        + Acl.T @ P
        + P @ Acl
        + b.Q
        + b.S @ K
        + K.T @ b.S.T
        + K.T @ b.R @ K
    )
    for M in data.closed_loop_noise(K):
        E = E + M.T @ P @ M
    _, Rb, Sb = data.corrected(P)
    gain = Rb @ K + b.G.T @ P + Sb.T
    return float(np.linalg.norm(E, "fro") + np.linalg.norm(gain, "fro"))


@dataclass
class SAREResult:
    P: np.ndarray
    K: np.ndarray
    iterations: int
    status: str
    history: list[tuple[np.ndarray, float]] = field(default_factory=list)
    reason: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def history_csv(self) -> str:
        """tau, |P_tau|_F, |P_tau - P_{tau-1}|_F, residual."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "norm_P", "norm_dP", "residual"])
        prev = None
        for tau, (P, res) in enumerate(self.history):
            dP = float("nan") if prev is None else float(np.linalg.norm(P - prev, "fro"))
            w.writerow([tau, repr(float(np.linalg.norm(P, "fro"))), repr(dP), repr(float(res))])
            prev = P
        return buf.getvalue()


def sare_iterate(data: LQGBData, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SAREResult:
    """Monotone fixed-point iteration over deterministic ARE solves.

    P_0 solves the noiseless ARE; each later iterate solves the ARE whose
    Q, R, S carry the noise corrections evaluated at the previous iterate.
    Stops when |P_t - P_{t-1}|_F <= tol (1 + |P_t|_F), or reports
    ``diverged`` once |P_t|_F exceeds 1e8 |P_0|_F or an inner solve fails.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = data.base
    P, K = solve_care(b)
    P0_norm = max(np.linalg.norm(P, "fro"), 1e-300)
    history = [(P, sare_residual(data, P, sare_gain(data, P)))]

    def finish(P, status, it, reason=""):
        K = sare_gain(data, P) if np.all(np.isfinite(P)) else np.full((b.m, b.n), np.nan)
        return SAREResult(P, K, it, status, history, reason)

    for tau in range(1, max_iter + 1):
        Qt, Rt, St = data.corrected(P)
        try:
            Pn, _ = solve_care(b.replace(Q=Qt, R=Rt, S=St))
        except (AlbrekhtError, np.linalg.LinAlgError, ValueError) as exc:
            log.info("inner ARE failed at iteration %d: %s", tau, exc)
            return finish(P, "diverged", tau, f"inner ARE failed at iteration {tau}: {exc}")
        history.append((Pn, sare_residual(data, Pn, sare_gain(data, Pn))))
        normP = np.linalg.norm(Pn, "fro")
        if not np.isfinite(normP) or normP > DIVERGENCE_FACTOR * P0_norm:
            return finish(Pn, "diverged", tau, f"|P| grew past {DIVERGENCE_FACTOR:g} |P_0| at iteration {tau}")
        if np.linalg.norm(Pn - P, "fro") <= tol * (1 + normP):
            return finish(Pn, "converged", tau)
        P = Pn
    return finish(P, "max_iter", max_iter, f"no convergence in {max_iter} iterations")


def check_monotone(history) -> bool:
    """True when every step P_t - P_{t-1} is PSD up to 1e-8 (1 + |P_t|_F)."""
    mats = [h[0] if isinstance(h, tuple) else h for h in history]
    for prev, cur in zip(mats, mats[1:]):
        diff = 0.5 * ((cur - prev) + (cur - prev).T)
        if np.linalg.eigvalsh(diff).min() < -1e-8 * (1 + np.linalg.norm(cur, "fro")):
            return False
    return True


def solve_sare(data: LQGBData, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SAREResult:
    """Like :func:`sare_iterate` but raise unless the iteration converged."""
    res = sare_iterate(data, tol, max_iter)
    if not res.converged:
        raise NumericalError(f"SARE iteration {res.status}: {res.reason}")
    return res


def refine_sare(data: LQGBData, P, dps: int | None = None, tol=None, max_iter: int = 30):
    """Polish a SARE solution by policy iteration, optionally in mpmath.

    Each step solves the closed-loop generalised Lyapunov equation for the
    current gain through its Kronecker form, then updates the gain.  Starting
    from a converged ``sare_iterate`` answer this converges quadratically.
    With ``dps`` set the arithmetic is carried out on mpf object arrays at
    that many digits (the caller's mpmath context is left unchanged) and
    mpf arrays are returned.
    """
    import mpmath

    from . import _mp

    def run(P):
        conv = _mp.to_mp if dps else (lambda a: np.asarray(a, float))
        b = data.base
        F, G, Q, R, S = (conv(a) for a in (b.F, b.G, b.Q, b.R, b.S))
        Cs = [conv(c) for c in data.C]
        Ds = [conv(d) for d in data.D]
        alpha = conv(b.alpha)[()] if dps else b.alpha
        n = b.n
        I = _mp.eye(n, F)
        stop = tol if tol is not None else (mpmath.mpf(10) ** (-(dps - 5)) if dps else 1e-14)

        def gain(P):
            Rb = R + sum((d.T @ P @ d for d in Ds), _mp.zeros(R.shape, R))
            Sb = S + sum((c.T @ P @ d for c, d in zip(Cs, Ds)), _mp.zeros(S.shape, S))
            return -_mp.solve(Rb, G.T @ P + Sb.T)

        P = conv(P)
        K = gain(P)
        for _ in range(max_iter):
            A = F + G @ K - 0.5 * alpha * I
            L = np.kron(I, A.T) + np.kron(A.T, I)
            for c, d in zip(Cs, Ds):
                Mk = c + d @ K
                L = L + np.kron(Mk.T, Mk.T)
            rhs = Q + S @ K + K.T @ S.T + K.T @ R @ K
            # column-major vec: vec(A'P) = (I kron A') vec P, vec(PA) = (A' kron I) vec P
            vecP = _mp.solve(L, -rhs.T.reshape(-1))
            Pn = vecP.reshape(n, n).T
            Pn = 0.5 * (Pn + Pn.T)
            K = gain(Pn)
            delta = _mp.norm(Pn - P)
            P = Pn
            if delta <= stop * (1 + _mp.norm(P)):
                break
        return P, K

    if dps:
        with mpmath.workdps(dps):
            return run(P)
    return run(P)
