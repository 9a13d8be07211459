"""Deterministic discounted algebraic Riccati equation.

Solves

    0 = -alpha P + P F + F'P + Q - (P G + S) R^{-1} (G'P + S')

for the stabilizing P and returns K = -R^{-1}(G'P + S').  The discount is
absorbed by shifting F to F - (alpha/2) I, so only the undiscounted core
is ever solved.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DetectabilityError, DimensionError, NumericalError, StabilizabilityError

log = logging.getLogger(__name__)

PBH_TOL = 1e-8
RESIDUAL_RTOL = 1e-9


def _as2d(a, rows=None, name="matrix"):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if rows is not None and a.shape[0] != rows:
        raise DimensionError(f"{name} has {a.shape[0]} rows, expected {rows}")
    return a


@dataclass(frozen=True, eq=False)
class AREData:
    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray | None = None
    alpha: float = 0.0
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        F = _as2d(self.F, name="F")
        n = F.shape[0]
        if F.shape != (n, n):
            raise DimensionError(f"F must be square, got {F.shape}")
        G = _as2d(self.G, n, "G")
        m = G.shape[1]
        Q = _as2d(self.Q, n, "Q")
        R = _as2d(self.R, m, "R")
        S = np.zeros((n, m)) if self.S is None else _as2d(self.S, n, "S")
        if Q.shape != (n, n) or R.shape != (m, m) or S.shape != (n, m):
            raise DimensionError(f"inconsistent shapes Q{Q.shape} R{R.shape} S{S.shape} for n={n}, m={m}")
        alpha = float(self.alpha)
        for name, val in dict(F=F, G=G, Q=Q, R=R, S=S).items():
            object.__setattr__(self, name, val)
        object.__setattr__(self, "alpha", alpha)
        if not self.check:
            return
        if alpha < 0:
            raise ValueError(f"discount must be nonnegative, got {alpha}")
        for name, M in (("Q", Q), ("R", R)):
            if np.linalg.norm(M - M.T) > 1e-12 * max(1.0, np.linalg.norm(M)):
                raise ValueError(f"{name} is not symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        W = np.block([[Q, S], [S.T, R]])
        if np.linalg.eigvalsh(0.5 * (W + W.T)).min() < -1e-10 * max(1.0, np.linalg.norm(W)):
            raise ValueError("[Q S; S' R] must be positive semidefinite")

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    @property
    def F_shifted(self) -> np.ndarray:
        return self.F - 0.5 * self.alpha * np.eye(self.n)

    def replace(self, **kw) -> "AREData":
        args = dict(F=self.F, G=self.G, Q=self.Q, R=self.R, S=self.S, alpha=self.alpha)
        args.update(kw)
        return AREData(**args)


def _uncontrollable_modes(A, B, tol=PBH_TOL):
    """Eigenvalues of A with Re >= 0 that fail the PBH rank test for (A, B)."""
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(np.hstack([A, B])))
    bad = []
    for lam in np.linalg.eigvals(A):
        if lam.real < -tol:
            continue
        sv = np.linalg.svd(np.hstack([A - lam * np.eye(n), B]), compute_uv=False)
        if sv[n - 1] <= tol * scale:
            bad.append(lam)
    return bad


def check_stabilizable(A, B):
    bad = _uncontrollable_modes(A, B)
    if bad:
        raise StabilizabilityError(f"(F, G) not stabilizable; uncontrollable modes {bad}")


def check_detectable(A, C):
    bad = _uncontrollable_modes(A.T, C.T)
    if bad:
        raise DetectabilityError(f"pair not detectable; unobservable modes {bad}")


def _psd_sqrt(M):
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def care_residual(data: AREData, P) -> float:
    F, G, Q, R, S = data.F, data.G, data.Q, data.R, data.S
    PGS = P @ G + S
    E = -data.alpha * P + P @ F + F.T @ P + Q - PGS @ np.linalg.solve(R, PGS.T)
    return float(np.linalg.norm(E, "fro"))


def care_gain(data: AREData, P) -> np.ndarray:
    return -np.linalg.solve(data.R, data.G.T @ P + data.S.T)


def _accept(data, P, K) -> bool:
    if not np.all(np.isfinite(P)):
        return False
    if care_residual(data, P) > RESIDUAL_RTOL * (1 + np.linalg.norm(P, "fro")):
        return False
    return np.linalg.eigvals(data.F_shifted + data.G @ K).real.max() < 0


def _initial_gain(A, B, R):
    """A stabilizing gain by Bass's method: shift, solve a Lyapunov equation, invert."""
    if np.linalg.eigvals(A).real.max() < 0:
        return np.zeros((B.shape[1], A.shape[0]))
    beta = max(1.0, 1.1 * np.abs(np.linalg.eigvals(A)).max())
    Ab = A + beta * np.eye(A.shape[0])
    Z = sla.solve_continuous_lyapunov(Ab, 2 * B @ np.linalg.solve(R, B.T))
    return -np.linalg.solve(R, B.T @ np.linalg.pinv(Z))


def newton_kleinman(data: AREData, K0=None, tol=1e-13, max_iter=100):
    """Kleinman's policy iteration on the shifted undiscounted ARE."""
    A, G, Q, R, S = data.F_shifted, data.G, data.Q, data.R, data.S
    K = _initial_gain(A, G, R) if K0 is None else np.asarray(K0, dtype=float)
    P = None
    for _ in range(max_iter):
        Acl = A + G @ K
        if np.linalg.eigvals(Acl).real.max() >= 0:
            raise NumericalError("Newton-Kleinman iterate lost stability")
        rhs = Q + S @ K + K.T @ S.T + K.T @ R @ K
        Pn = sla.solve_continuous_lyapunov(Acl.T, -rhs)
        Pn = 0.5 * (Pn + Pn.T)
        K = care_gain(data, Pn)
        if P is not None and np.linalg.norm(Pn - P) <= tol * (1 + np.linalg.norm(Pn)):
            return Pn, K
        P = Pn
    return P, K


def solve_care(data: AREData):
    """Stabilizing solution ``(P, K)`` of the discounted ARE."""
    A = data.F_shifted
    check_stabilizable(A, data.G)
    Rinv_St = np.linalg.solve(data.R, data.S.T)
    check_detectable(A - data.G @ Rinv_St, _psd_sqrt(data.Q - data.S @ Rinv_St))

    P = None
    try:
        P = sla.solve_continuous_are(A, data.G, data.Q, data.R, s=data.S)
        P = 0.5 * (P + P.T)
        K = care_gain(data, P)
        if _accept(data, P, K):
            return P, K
        log.debug("Schur solution rejected, falling back to Newton-Kleinman")
    except (np.linalg.LinAlgError, ValueError) as exc:
        log.debug("Schur solver failed (%s), falling back to Newton-Kleinman", exc)

    try:
        K0 = care_gain(data, P) if P is not None and np.all(np.isfinite(P)) else None
        if K0 is not None and np.linalg.eigvals(A + data.G @ K0).real.max() >= 0:
            K0 = None
        P, K = newton_kleinman(data, K0)
    except (np.linalg.LinAlgError, ValueError, NumericalError) as exc:
        raise NumericalError(f"ARE solve failed: {exc}") from exc
    if P is None or not _accept(data, P, K):
        raise NumericalError("ARE residual tolerance not met after Newton-Kleinman fallback")
    return P, K


def closed_loop_spectrum(F, G, K) -> np.ndarray:
    """Eigenvalues of F + G K sorted by (real, imag)."""
    ev = np.linalg.eigvals(np.asarray(F, float) + np.asarray(G, float) @ np.asarray(K, float))
    # round away last-bit noise so conjugate pairs sort deterministically
    order = sorted(range(len(ev)), key=lambda i: (round(ev[i].real, 12), round(ev[i].imag, 12)))
    return ev[order]
