"""Monte Carlo check of computed value/feedback pairs.

Simulates dx = f(x, kappa(x)) dt + sum_k gamma_k(x, kappa(x)) dw_k by
Euler-Maruyama and accumulates the discounted running cost with a
left-endpoint rule.  Paths are processed in fixed blocks; the normals for
block b over steps 8c .. 8c+7 come from one SFC64 stream seeded with the
entropy (seed, b, c), so results do not depend on how blocks are scheduled.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hjb import NonlinearProblem, SeriesSolution
from .poly import PolySeries
from .sare import LQGBData

log = logging.getLogger(__name__)

BLOCK = 8192
BLOWUP = 1e6


@dataclass(frozen=True)
class SimConfig:
    x0: Sequence[float]
    T: float = 10.0
    dt: float = 1e-3
    npaths: int = 1000
    seed: int = 0
    alpha: float | None = None
    keep_costs: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.npaths < 1:
            raise ValueError("npaths must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class SimResult:
    mean_cost: float
    std_error: float
    paths_diverged: int
    npaths: int
    costs: np.ndarray | None = None


class _PolyMap:
    """Vectorised evaluation of a list of series: (nvars, B) -> (ncomp, B)."""

    def __init__(self, series: Sequence[PolySeries], nvars: int):
        monos: dict[tuple, int] = {}
        entries = []
        for comp, s in enumerate(series):
            for h in s.terms.values():
                for e, c in h.coeffs.items():
                    idx = monos.setdefault(e, len(monos))
                    entries.append((comp, idx, float(c)))
        self.exps = np.array(list(monos), dtype=int).reshape(len(monos), nvars)
        self.coef = np.zeros((len(series), len(monos)))
        for comp, idx, c in entries:
            self.coef[comp, idx] += c
        self.maxexp = int(self.exps.max()) if len(monos) else 0
        self.ncomp = len(series)

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        B = Z.shape[1]
        if not len(self.exps):
            return np.zeros((self.ncomp, B))
        powers = [[np.ones(B)] for _ in range(Z.shape[0])]
        for v in range(Z.shape[0]):
            for _ in range(self.maxexp):
                powers[v].append(powers[v][-1] * Z[v])
        mons = np.empty((len(self.exps), B))
        for t, e in enumerate(self.exps):
            val = powers[0][e[0]].copy()
            for v in range(1, len(e)):
                if e[v]:
                    val *= powers[v][e[v]]
            mons[t] = val
        return self.coef @ mons


class _ClosedLoop:
    """Linear parts as matrices, higher-degree parts as monomial tables."""

    def __init__(self, problem: NonlinearProblem, feedback: SeriesSolution | np.ndarray, degree: int | None):
        lin, b = problem.lin, problem.lin.base
        self.n, self.m, self.r = lin.n, lin.m, lin.r
        nz = self.n + self.m
        self.FG = np.hstack([b.F, b.G])
        self.CD = [np.hstack([c, d]) for c, d in zip(lin.C, lin.D)]
        self.W = np.block([[b.Q, b.S], [b.S.T, b.R]])
        self.f_hi = _PolyMap(problem.f_hi, nz)
        self.g_hi = [_PolyMap(g, nz) for g in problem.gamma_hi]
        self.l_hi = _PolyMap([problem.l_hi], nz)
        self.has_hi = bool(len(self.f_hi.exps) or any(len(g.exps) for g in self.g_hi) or len(self.l_hi.exps))
        if isinstance(feedback, SeriesSolution):
            sol = feedback.as_float()
            self.K = np.atleast_2d(sol.K)
            hi = [
                PolySeries.from_homs(self.n, [t[j] for d, t in sol.kappa_hi.items() if degree is None or d <= degree])
                for j in range(self.m)
            ]
            self.kappa_hi = _PolyMap(hi, self.n)
        else:
            self.K = np.atleast_2d(np.asarray(feedback, dtype=float))
            self.kappa_hi = _PolyMap([PolySeries.zero(self.n) for _ in range(self.m)], self.n)
        if self.K.shape != (self.m, self.n):
            raise ValueError(f"feedback gain has shape {self.K.shape}, expected {(self.m, self.n)}")

        self.linear = not self.has_hi and not len(self.kappa_hi.exps)
        if self.linear:
            IK = np.vstack([np.eye(self.n), self.K])
            self.A_cl = self.FG @ IK
            self.B_cl = [CD @ IK for CD in self.CD]
            self.W_cl = IK.T @ self.W @ IK

    def control(self, x):
        u = self.K @ x
        if len(self.kappa_hi.exps):
            u = u + self.kappa_hi(x)
        return u

    def fields(self, z):
        drift = self.FG @ z
        cost = 0.5 * np.einsum("ib,ib->b", z, self.W @ z)
        diff = [CD @ z for CD in self.CD]
        if self.has_hi:
            drift = drift + self.f_hi(z)
            cost = cost + self.l_hi(z)[0]
            diff = [d + g(z) for d, g in zip(diff, self.g_hi)]
        return drift, cost, diff


def _as_nonlinear(problem) -> NonlinearProblem:
    if isinstance(problem, LQGBData):
        return NonlinearProblem(problem, degree_cap=2)
    return problem


def _block_stream(seed: int, block: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence([seed, block, chunk])))


class _LinearStepper:
    """In-place Euler-Maruyama step for a linear closed loop, reusing buffers.

    Drift and diffusion matrices are stacked as [A dt; B_1 sqrt(dt); ...] so a
    step is one product with x followed by a weighted sum of the blocks.
    """

    def __init__(self, model, size, dt):
        n, r = model.n, model.r
        self.shape = (1 + r, n, size)
        self.Z = np.vstack([model.A_cl * dt, *(B * np.sqrt(dt) for B in model.B_cl)])
        self.W = model.W_cl * (0.5 * dt)
        self.big = np.empty(((1 + r) * n, size))
        self.drift = np.empty((n, size))
        self.tmp = np.empty((n, size))
        self.run = np.empty(size)

    def __call__(self, x, noise, weight):
        np.matmul(self.W, x, out=self.tmp)
        self.tmp *= x
        self.tmp.sum(axis=0, out=self.run)
        if weight != 1.0:
            self.run *= weight
        np.matmul(self.Z, x, out=self.big)
        blocks = self.big.reshape(self.shape)
        blocks *= noise[:, None, :]
        np.add.reduce(blocks, axis=0, out=self.drift)
        x += self.drift
        return self.run


class _GeneralStepper:
    def __init__(self, model, size, dt):
        self.model = model
        self.dt = dt
        self.sq = np.sqrt(dt)

    def __call__(self, x, noise, weight):
        model = self.model
        z = np.vstack([x, model.control(x)])
        drift, run, diff = model.fields(z)
        x += drift * self.dt
        for k in range(model.r):
            x += diff[k] * (noise[1 + k] * self.sq)
        return run * (weight * self.dt)


# steps per random-number chunk; also the blow-up check interval
CHUNK = 8


def _run_block(model: _ClosedLoop, cfg: SimConfig, alpha: float, block: int, size: int):
    x = np.repeat(np.asarray(cfg.x0, dtype=float).reshape(model.n, 1), size, axis=1)
    cost = np.zeros(size)
    dead = np.zeros(size, dtype=bool)
    dt = cfg.dt
    step = (_LinearStepper if model.linear else _GeneralStepper)(model, size, dt)
    # row 0 multiplies the drift; rows 1..r hold the standard normals of this step
    noise = np.ones((1 + model.r, size))
    normals = np.empty((CHUNK, model.r, size))
    nsteps = cfg.steps
    for s in range(nsteps):
        if model.r:
            if s % CHUNK == 0:
                _block_stream(cfg.seed, block, s // CHUNK).standard_normal(out=normals)
            noise[1:] = normals[s % CHUNK]
        cost += step(x, noise, np.exp(-alpha * s * dt) if alpha else 1.0)
        if s % CHUNK == CHUNK - 1 or s == nsteps - 1:
            # negated comparison also flags NaN
            bad = ~(np.einsum("ib,ib->b", x, x) <= BLOWUP**2)
            if bad.any():
                dead |= bad
                x[:, bad] = 0.0
    return cost, dead


def simulate_closed_loop(problem, feedback, cfg: SimConfig, degree: int | None = None) -> SimResult:
    """Euler-Maruyama estimate of the discounted cost of a feedback from ``cfg.x0``.

    ``feedback`` is a :class:`SeriesSolution` (truncated to feedback degree
    ``degree`` when given) or a plain gain matrix.  Paths whose state exceeds
    1e6 are dropped from the mean and counted in ``paths_diverged``.
    """
    problem = _as_nonlinear(problem)
    model = _ClosedLoop(problem, feedback, degree)
    if len(cfg.x0) != model.n:
        raise ValueError(f"x0 has {len(cfg.x0)} entries, expected {model.n}")
    alpha = problem.lin.base.alpha if cfg.alpha is None else float(cfg.alpha)
    sizes = [min(BLOCK, cfg.npaths - b * BLOCK) for b in range((cfg.npaths + BLOCK - 1) // BLOCK)]
    jobs = list(enumerate(sizes))
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(lambda job: _run_block(model, cfg, alpha, *job), jobs))
    else:
        parts = [_run_block(model, cfg, alpha, *job) for job in jobs]
    costs = np.concatenate([p[0] for p in parts])
    dead = np.concatenate([p[1] for p in parts])
    good = costs[~dead]
    if good.size == 0:
        mean, se = float("nan"), float("nan")
    else:
        mean = float(good.mean())
        se = float(good.std(ddof=1) / np.sqrt(good.size)) if good.size > 1 else 0.0
    return SimResult(mean, se, int(dead.sum()), cfg.npaths, costs if cfg.keep_costs else None)


def compare_feedbacks(problem, feedbacks, cfg: SimConfig) -> list[tuple[str, SimResult]]:
    """Simulate several feedbacks on common random numbers, cheapest first.

    ``feedbacks`` is a sequence of ``(label, feedback, degree)`` triples.
    """
    rows = []
    for label, fb, degree in feedbacks:
        rows.append((label, simulate_closed_loop(problem, fb, cfg, degree)))
    rows.sort(key=lambda lr: (np.nan_to_num(lr[1].mean_cost, nan=np.inf), lr[0]))
    return rows


def results_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feedback", "mean", "std_error", "diverged", "npaths"])
    for label, res in rows:
        w.writerow([label, repr(res.mean_cost), repr(res.std_error), res.paths_diverged, res.npaths])
    return buf.getvalue()
