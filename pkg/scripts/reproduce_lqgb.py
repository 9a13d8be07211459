"""Two-state bilinear-noise regulator: noiseless, noisy, isotropic and tenfold-noise runs."""
import argparse

import numpy as np

from albrekht.examples import lqgb_example
from albrekht.fixtures import load_fixture
from albrekht.lqr import solve_care
from albrekht.sare import sare_iterate, sare_residual


def show(label, data, tol):
    res = sare_iterate(data, tol=tol)
    print(f"== {label}: {res.status} after {res.iterations} iterations")
    if res.converged:
        eig = np.linalg.eigvals(data.base.F + data.base.G @ res.K)
        print("P =", np.array2string(res.P, precision=4))
        print("K =", np.array2string(res.K, precision=4))
        print("closed-loop eigenvalues:", np.array2string(np.sort_complex(eig), precision=4))
        print(f"residual {sare_residual(data, res.P, res.K):.2e}")
    else:
        print(res.reason)
    return res


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tol", type=float, default=1e-6)
    parser.add_argument("--history", help="write the noisy iteration history CSV here")
    args = parser.parse_args()

    P, K = solve_care(lqgb_example().base)
    print("== noiseless ARE")
    print("P =", np.array2string(P, precision=4))
    print("K =", np.array2string(K, precision=4))
    noisy = show("noise 0.1 (C, D as stated)", lqgb_example(), args.tol)
    show("noise 0.1 (C_k = 0.1 I, D = 0)", load_fixture("lqgb_isotropic").lin, args.tol)
    show("noise 1.0", lqgb_example(noise=1.0), args.tol)
    if args.history:
        with open(args.history, "w") as fh:
            fh.write(noisy.history_csv())


if __name__ == "__main__":
    main()
