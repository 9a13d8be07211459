"""Reference problems: the two-state bilinear-noise regulator and the orbiting pendulum."""
from __future__ import annotations

from math import factorial

import numpy as np

from .hjb import NonlinearProblem
from .poly import DEGREE_CAP, HomPoly, PolySeries
from .sare import LQGBData

# orbiting pendulum constants: l*g, linear and cubic damping, 1% fluctuations
PENDULUM_LG = 8.7
PENDULUM_C1 = 0.1
PENDULUM_C3 = 0.05
PENDULUM_NOISE = 0.01


def lqgb_example(noise: float = 0.1, cross_term: bool = False) -> LQGBData:
    """Double integrator with state and control multiplicative noise.

    dx1 = x2 dt + noise*x1 dw1,  dx2 = u dt + noise*(x2 + u) dw2, cost
    (|x|^2 + u^2)/2.  ``cross_term`` switches on S = [0; 1]; the default S = 0
    is the version whose noiseless solution is P = [[sqrt3, 1], [1, sqrt3]].
    """
    F = np.array([[0.0, 1.0], [0.0, 0.0]])
    G = np.array([[0.0], [1.0]])
    S = np.array([[0.0], [1.0]]) if cross_term else np.zeros((2, 1))
    C = [np.array([[noise, 0.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [0.0, noise]])]
    D = [np.zeros((2, 1)), np.array([[0.0], [noise]])]
    return LQGBData.from_matrices(F, G, np.eye(2), np.eye(1), S, C, D)


def lqr_sanity() -> LQGBData:
    """Noiseless double integrator."""
    return lqgb_example().noiseless()


def _sin_tail(max_degree: int) -> dict[int, float]:
    """Taylor coefficients of sin t beyond the linear term, up to max_degree."""
    return {j: (-1) ** ((j - 1) // 2) / factorial(j) for j in range(3, max_degree + 1, 2)}


def pendulum(variant: str = "dynamics", degree_cap: int = DEGREE_CAP) -> NonlinearProblem:
    """Inverted pendulum in orbit with 1% multiplicative noise, state (angle, rate).

    dx2 = (lg sin x1 - c1 x2 - c3 x2^3 + u) dt
          + 0.01 lg sin x1 dw1 - 0.01 (c1 x2 + c3 x2^3) dw2 + 0.01 u dw3

    with sin replaced by its Taylor polynomial of degree ``degree_cap - 1``.
    ``variant="printed"`` flips the sign of the linear damping entry of F to
    the +0.1 of the published matrix list, keeping everything else.
    """
    if variant not in ("dynamics", "printed"):
        raise ValueError(f"unknown pendulum variant {variant!r}")
    lg, c1, c3, eps = PENDULUM_LG, PENDULUM_C1, PENDULUM_C3, PENDULUM_NOISE
    damping = -c1 if variant == "dynamics" else c1
    F = np.array([[0.0, 1.0], [lg, damping]])
    G = np.array([[0.0], [1.0]])
    C = [
        np.array([[0.0, 0.0], [eps * lg, 0.0]]),
        np.array([[0.0, 0.0], [0.0, -eps * c1]]),
        np.zeros((2, 2)),
    ]
    D = [np.zeros((2, 1)), np.zeros((2, 1)), np.array([[0.0], [eps]])]
    lin = LQGBData.from_matrices(F, G, np.eye(2), np.eye(1), None, C, D)

    nz = 3
    top = degree_cap - 1
    sin_hi = [HomPoly(nz, j, {(j, 0, 0): c}) for j, c in _sin_tail(top).items()]
    cubic_damp = [HomPoly(nz, 3, {(0, 3, 0): -c3})] if top >= 3 else []
    zero = PolySeries.zero(nz)
    f_hi = [zero, PolySeries.from_homs(nz, [h.scale(lg) for h in sin_hi] + cubic_damp)]
    gamma_hi = [
        [zero, PolySeries.from_homs(nz, [h.scale(eps * lg) for h in sin_hi])],
        [zero, PolySeries.from_homs(nz, [h.scale(eps) for h in cubic_damp])],
        [zero, zero],
    ]
    return NonlinearProblem(lin, f_hi, gamma_hi, None, degree_cap)


# value terms as listed for the pendulum (degree-6 value, degree-5 feedback),
# keyed by exponent tuple; plus signs restored where the listing drops them
PENDULUM_PUBLISHED_PI = {
    (2, 0): 26.7042, (1, 1): 17.4701, (0, 2): 2.9488,
    (4, 0): -4.6153, (3, 1): -2.9012, (2, 2): -0.5535, (1, 3): -0.0802, (0, 4): -0.0157,
    (6, 0): 0.3361, (5, 1): 0.1468, (4, 2): -0.0015, (3, 3): -0.0077,
    (2, 4): -0.0022, (1, 5): -0.0003, (0, 6): 0.0000,
}
PENDULUM_PUBLISHED_KAPPA = {
    (1, 0): -17.4598, (0, 1): -5.8941,
    (3, 0): 2.9012, (2, 1): 1.1071, (1, 2): 0.2405, (0, 3): 0.0628,
    (5, 0): -0.1468, (4, 1): 0.0031, (3, 2): 0.0232, (2, 3): 0.0089, (1, 4): 0.0014, (0, 5): -0.0002,
}


def _solution_coefficient(sol, kind: str, exps: tuple[int, ...]) -> float:
    """Coefficient of x^exps in the value (kind="pi") or the scalar feedback (kind="kappa")."""
    d = sum(exps)
    if kind == "pi" and d == 2:
        i, j = [k for k, e in enumerate(exps) for _ in range(e)]
        return float(sol.P[i, j] if i != j else sol.P[i, i] / 2)
    if kind == "kappa" and d == 1:
        return float(np.atleast_2d(sol.K)[0, exps.index(1)])
    table = sol.pi_hi.get(d) if kind == "pi" else (sol.kappa_hi.get(d) or [None])[0]
    return float(table.coeffs.get(exps, 0.0)) if table is not None else 0.0


def pendulum_match_report(sol, rtol: float = 1e-2, print_digits: int = 4) -> list[dict]:
    """Compare a pendulum series solution with the listed coefficients.

    Each row records the listed and computed values and two verdicts:
    ``rel_ok`` is the relative test at ``rtol`` and ``rounding_ok`` asks
    whether the computed value rounds to the listed one at ``print_digits``
    decimals, which is the most a 4-decimal listing can confirm.
    """
    half = 0.5 * 10.0**-print_digits
    rows = []
    for kind, table in (("pi", PENDULUM_PUBLISHED_PI), ("kappa", PENDULUM_PUBLISHED_KAPPA)):
        for exps, listed in table.items():
            got = _solution_coefficient(sol, kind, exps)
            rows.append(
                {
                    "kind": kind,
                    "exponents": list(exps),
                    "listed": listed,
                    "computed": got,
                    "rel_ok": abs(got - listed) <= rtol * abs(listed) if listed else abs(got) <= half,
                    "rounding_ok": abs(got - listed) <= half * (1 + 1e-9),
                }
            )
    return rows


def format_match_report(rows: list[dict]) -> str:
    lines = [f"{'term':<12}{'listed':>12}{'computed':>14}  rel_1e-2  rounds_to_listed"]
    for r in rows:
        name = r["kind"] + "".join(str(e) for e in r["exponents"])
        lines.append(
            f"{name:<12}{r['listed']:>12.4f}{r['computed']:>14.6f}  {'ok' if r['rel_ok'] else 'MISMATCH':<8}  "
            f"{'yes' if r['rounding_ok'] else 'no'}"
        )
    return "\n".join(lines)
