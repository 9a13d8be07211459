"""End-to-end acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import json
import time
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from albrekht.examples import format_match_report, lqgb_example, pendulum, pendulum_match_report
from albrekht.hjb import (
    build_deterministic_operator,
    build_noise_operator,
    lemma1_certificate,
    residual_profile,
    solve_hjb_series,
)
from albrekht.lqr import solve_care
from albrekht.sare import check_monotone, sare_iterate
from albrekht.sdre import TimeVaryingProblem, integrate_sdre
from albrekht.sde import SimConfig, simulate_closed_loop

from conftest import random_lqgb, random_nonlinear

REPORTS = Path(__file__).resolve().parent.parent / "reports"

P_NOISELESS = [[1.7321, 1.0], [1.0, 1.7321]]
K_NOISELESS = [[-1.0, -1.7321]]
EIG_NOISELESS = [-0.8660 - 0.5j, -0.8660 + 0.5j]
P_NOISY = [[1.7625, 1.0176], [1.0176, 1.7524]]
K_NOISY = [[-1.0176, -1.7524]]
EIG_NOISY = [-0.8762 - 0.4999j, -0.8762 + 0.4999j]


@pytest.fixture
def verdict(capsys):
    def report(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return report


def max_dev(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def closed_loop_eigs(data, K):
    return np.sort_complex(np.linalg.eigvals(data.base.F + data.base.G @ K))


def spectrum_gap(a, b):
    """Largest distance between two spectra under the best one-to-one pairing."""
    cost = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def test_criterion_01_noiseless_are(verdict):
    t0 = time.perf_counter()
    data = lqgb_example().noiseless()
    P, K = solve_care(data.base)
    elapsed = time.perf_counter() - t0
    dev = max(max_dev(P, P_NOISELESS), max_dev(K, K_NOISELESS), max_dev(closed_loop_eigs(data, K), EIG_NOISELESS))
    verdict(1, dev <= 1e-3 and elapsed < 1, f"max deviation {dev:.2e}, {elapsed:.3f} s")


def test_criterion_02_sare_regression(verdict):
    t0 = time.perf_counter()
    data = lqgb_example()
    res = sare_iterate(data, tol=1e-6)
    elapsed = time.perf_counter() - t0
    dev = max(max_dev(res.P, P_NOISY), max_dev(res.K, K_NOISY), max_dev(closed_loop_eigs(data, res.K), EIG_NOISY))
    ok = res.converged and dev <= 1e-3 and 6 <= res.iterations <= 10 and elapsed < 1
    verdict(2, ok, f"status {res.status}, {res.iterations} iterations, max deviation {dev:.2e}, {elapsed:.3f} s")


def test_criterion_03_divergence(verdict):
    t0 = time.perf_counter()
    res = sare_iterate(lqgb_example(noise=1.0))
    elapsed = time.perf_counter() - t0
    verdict(3, res.status == "diverged" and elapsed < 5, f"status {res.status} after {res.iterations} iterations, {elapsed:.3f} s")


def test_criterion_04_monotonicity(verdict):
    rng = np.random.default_rng(404)
    checked, worst_step, worst_dom = 0, np.inf, np.inf
    while checked < 50:
        n, m, r = rng.integers(1, 5), rng.integers(1, 3), rng.integers(1, 4)
        data = random_lqgb(rng, n, m, r, noise=0.05)
        res = sare_iterate(data)
        if not res.converged:
            continue
        checked += 1
        Ps = [P for P, _ in res.history]
        for prev, cur in zip(Ps, Ps[1:]):
            worst_step = min(worst_step, np.linalg.eigvalsh(cur - prev).min() / (1 + np.linalg.norm(cur)))
        P0 = solve_care(data.base)[0]
        worst_dom = min(worst_dom, np.linalg.eigvalsh(res.P - P0).min() / (1 + np.linalg.norm(res.P)))
        assert check_monotone(res.history)
    ok = worst_step >= -1e-8 and worst_dom >= -1e-8
    verdict(4, ok, f"{checked} problems, worst scaled step eigenvalue {worst_step:.2e}, worst dominance {worst_dom:.2e}")


def test_criterion_05_operator_spectra(verdict):
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 5))
        A = rng.normal(size=(n, n))
        lam = np.linalg.eigvals(A)
        for d in (3, 4):
            sums = [sum(c) for c in combinations_with_replacement(lam, d)]
            worst = max(worst, spectrum_gap(np.linalg.eigvals(build_deterministic_operator(A, d)), sums))
    worst_noise = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 5))
        V = rng.normal(size=(n, n))
        mu = rng.normal(size=n)
        M = V @ np.diag(mu) @ np.linalg.inv(V)
        expect = [a * b + b * c + c * a for a, b, c in combinations_with_replacement(mu, 3)]
        worst_noise = max(worst_noise, spectrum_gap(np.linalg.eigvals(build_noise_operator([M], 3)), expect))
    verdict(5, worst <= 1e-8 and worst_noise <= 1e-8, f"eigenvalue-sum gap {worst:.2e}, elementary-symmetric gap {worst_noise:.2e}")


def test_criterion_06_margin_implies_invertible(verdict):
    rng = np.random.default_rng(606)
    sampled, singular, smallest = 0, 0, np.inf
    while sampled < 200:
        n, m, r = int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(1, 4))
        data = random_lqgb(rng, n, m, r, noise=float(rng.uniform(0.01, 0.4)))
        res = sare_iterate(data)
        if not res.converged:
            continue
        cert = lemma1_certificate(data, res.P, res.K, 3)
        if cert.margin <= 0:
            continue
        sampled += 1
        smallest = min(smallest, cert.smallest_singular_value / max(cert.largest_singular_value, 1e-300))
        singular += not cert.invertible
    verdict(6, singular == 0, f"{sampled} problems with positive margin, {singular} singular, min relative singular value {smallest:.2e}")


def test_criterion_07_pendulum_series(verdict):
    REPORTS.mkdir(exist_ok=True)
    summary = {}
    t0 = time.perf_counter()
    sol = solve_hjb_series(pendulum("dynamics"))
    elapsed = time.perf_counter() - t0
    for variant in ("dynamics", "printed"):
        s = sol if variant == "dynamics" else solve_hjb_series(pendulum(variant))
        rows = pendulum_match_report(s)
        (REPORTS / f"pendulum_{variant}_match.txt").write_text(format_match_report(rows) + "\n")
        summary[variant] = {
            "rows": rows,
            "parity_violation": s.parity_violation(),
            "mismatches": [r["kind"] + "".join(map(str, r["exponents"])) for r in rows if not r["rel_ok"]],
        }
    (REPORTS / "pendulum_match.json").write_text(json.dumps(summary, indent=1) + "\n")
    low = [r for r in summary["dynamics"]["rows"] if sum(r["exponents"]) <= 2]
    low_ok = all(r["rel_ok"] for r in low)
    parity = max(v["parity_violation"] for v in summary.values())
    ok = low_ok and parity <= 1e-10 and elapsed < 30
    detail = (
        f"quadratic and linear terms {'match' if low_ok else 'differ'}, parity {parity:.1e}, {elapsed:.2f} s; "
        f"higher-degree mismatches: dynamics {len(summary['dynamics']['mismatches'])}, "
        f"printed {len(summary['printed']['mismatches'])} (see reports/)"
    )
    verdict(7, ok, detail)


def test_criterion_08_residual_order(verdict):
    prob = pendulum()
    # truncation residuals at |x| = 1e-3 sit far below double-precision roundoff
    sol = solve_hjb_series(prob, dps=40)
    prof = residual_profile(prob, sol, radii=np.logspace(-3, -1, 9), dps=40)
    verdict(8, prof.value_slope >= 6.8, f"value residual slope {prof.value_slope:.3f}, feedback residual slope {prof.gain_slope:.3f}")


def test_criterion_09_sdre_limit(verdict):
    data = lqgb_example()
    P_sare = sare_iterate(data, tol=1e-13).P
    traj = integrate_sdre(TimeVaryingProblem.constant(data, 30.0), 3000)
    gap = max_dev(traj.P[0], P_sare)
    short = TimeVaryingProblem.constant(data, 2.0, np.array([[3.0, -1.0], [-1.0, 2.0]]))
    P0 = [integrate_sdre(short, s).P[0] for s in (10, 20, 40)]
    order = float(np.log2(np.linalg.norm(P0[1] - P0[0]) / np.linalg.norm(P0[2] - P0[1])))
    verdict(9, gap <= 1e-3 and order >= 3.5, f"limit gap {gap:.2e}, step-halving order {order:.2f}")


@pytest.mark.slow
def test_criterion_10_monte_carlo(verdict):
    data = lqgb_example()
    res = sare_iterate(data, tol=1e-13)
    x0 = np.array([0.5, 0.0])
    target = 0.5 * x0 @ res.P @ x0
    t0 = time.perf_counter()
    sim = simulate_closed_loop(data, res.K, SimConfig(x0, T=10.0, dt=1e-3, npaths=100_000, seed=2024))
    elapsed = time.perf_counter() - t0
    gap = abs(sim.mean_cost - target)
    allowed = 3 * sim.std_error + 0.01 * target
    ok = gap <= allowed and elapsed < 60 and sim.paths_diverged == 0
    verdict(10, ok, f"mean {sim.mean_cost:.5f} vs {target:.5f}, gap {gap:.2e} <= {allowed:.2e}, {elapsed:.1f} s")


def test_criterion_11_direct_vs_iterative(verdict):
    rng = np.random.default_rng(1111)
    compared, worst = 0, 0.0
    while compared < 20:
        n, m, r = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        prob = random_nonlinear(rng, n, m, r, cap=3, noise=0.1)
        try:
            a = solve_hjb_series(prob, "direct")
            b = solve_hjb_series(prob, "iterative")
        except Exception:
            continue
        compared += 1
        worst = max(worst, max_dev(a.pi_hi[3].to_vector(), b.pi_hi[3].to_vector()))
        for ka, kb in zip(a.kappa_hi[2], b.kappa_hi[2]):
            worst = max(worst, max_dev(ka.to_vector(), kb.to_vector()))
    verdict(11, worst <= 1e-8, f"{compared} problems, largest coefficient difference {worst:.2e}")
