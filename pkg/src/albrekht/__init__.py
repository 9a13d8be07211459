"""Stochastic optimal control by power series.

Riccati solvers for linear-quadratic problems with state- and
control-multiplicative noise, degree-by-degree solution of the stochastic
HJB equations, the finite-horizon Riccati flow, and a Monte Carlo harness to
check computed value functions.
"""
from .errors import (
    AlbrekhtError,
    DetectabilityError,
    DimensionError,
    DivergenceError,
    NumericalError,
    OperatorSingularError,
    StabilizabilityError,
)
from .hjb import NonlinearProblem, SeriesSolution, hjb_residual, lemma1_certificate, solve_hjb_series
from .lqr import AREData, solve_care
from .poly import HomPoly, PolySeries
from .sare import LQGBData, SAREResult, sare_iterate, solve_sare
from .sde import SimConfig, SimResult, compare_feedbacks, simulate_closed_loop
from .sdre import TimeVaryingProblem, integrate_pi3, integrate_sdre

__version__ = "0.1.0"

__all__ = [
    "AREData",
    "AlbrekhtError",
    "DetectabilityError",
    "DimensionError",
    "DivergenceError",
    "HomPoly",
    "LQGBData",
    "NonlinearProblem",
    "NumericalError",
    "OperatorSingularError",
    "PolySeries",
    "SAREResult",
    "SeriesSolution",
    "SimConfig",
    "SimResult",
    "StabilizabilityError",
    "TimeVaryingProblem",
    "compare_feedbacks",
    "hjb_residual",
    "integrate_pi3",
    "integrate_sdre",
    "lemma1_certificate",
    "sare_iterate",
    "simulate_closed_loop",
    "solve_care",
    "solve_hjb_series",
    "solve_sare",
]
