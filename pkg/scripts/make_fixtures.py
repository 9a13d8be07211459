"""Regenerate the bundled problem files from the Python definitions."""
from pathlib import Path

import numpy as np

from albrekht.examples import lqgb_example, lqr_sanity, pendulum
from albrekht.hjb import NonlinearProblem
from albrekht.problem_file import ProblemBundle, save_problem
from albrekht.sare import LQGBData

OUT = Path(__file__).resolve().parents[1] / "src" / "albrekht" / "fixtures"


def lq(data, horizon=30.0):
    return ProblemBundle(NonlinearProblem(data), horizon=horizon, P_T=np.zeros((data.n, data.n)))


def main():
    base = lqgb_example()
    isotropic = LQGBData(base.base, [0.1 * np.eye(2), 0.1 * np.eye(2)], [np.zeros((2, 1))] * 2)
    zero_cost = LQGBData(base.base.replace(Q=np.zeros((2, 2))), base.C, base.D)
    bundles = {
        "lqgb": lq(base),
        "lqgb_cross": lq(lqgb_example(cross_term=True)),
        "lqgb_divergent": lq(lqgb_example(noise=1.0)),
        "lqgb_isotropic": lq(isotropic),
        "lqr_sanity": lq(lqr_sanity()),
        "zero_cost": lq(zero_cost, horizon=5.0),
        "pendulum": ProblemBundle(pendulum("dynamics"), horizon=5.0, P_T=np.zeros((2, 2))),
        "pendulum_printed": ProblemBundle(pendulum("printed"), horizon=5.0, P_T=np.zeros((2, 2))),
    }
    for name, b in bundles.items():
        save_problem(b, OUT / f"{name}.json")
        print("wrote", OUT / f"{name}.json")


if __name__ == "__main__":
    main()
