"""Monte Carlo check of the two-state value and of pendulum feedback truncations."""
import argparse
import time

import numpy as np

from albrekht.examples import lqgb_example, pendulum
from albrekht.hjb import solve_hjb_series
from albrekht.sare import sare_iterate
from albrekht.sde import SimConfig, compare_feedbacks, results_csv, simulate_closed_loop


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=100_000)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--pendulum-x0", type=float, nargs=2, default=[0.8, 0.0])
    args = parser.parse_args()

    data = lqgb_example()
    res = sare_iterate(data, tol=1e-13)
    x0 = np.array([0.5, 0.0])
    t0 = time.perf_counter()
    sim = simulate_closed_loop(data, res.K, SimConfig(x0, T=10.0, dt=args.dt, npaths=args.paths, seed=args.seed))
    print(f"two-state: mean {sim.mean_cost:.6f} +- {sim.std_error:.1e}, value {0.5 * x0 @ res.P @ x0:.6f}, "
          f"diverged {sim.paths_diverged}, {time.perf_counter() - t0:.1f} s")

    prob = pendulum()
    sol = solve_hjb_series(prob)
    cfg = SimConfig(args.pendulum_x0, T=8.0, dt=2e-3, npaths=min(args.paths, 5000), seed=args.seed)
    rows = compare_feedbacks(prob, [(f"degree{d}", sol, d) for d in (1, 3, 5)], cfg)
    print(f"pendulum from x0 = {args.pendulum_x0}, series value {sol.value(args.pendulum_x0):.5f}")
    print(results_csv(rows), end="")


if __name__ == "__main__":
    main()
