"""Command line front end.

    albrekht solve-sare  --input P.json --out DIR [--tol --max-iter]
    albrekht solve-hjb   --input P.json --out DIR [--degree --method --dps]
    albrekht solve-sdre  --input P.json --out DIR [--steps --horizon --cubic]
    albrekht simulate    --input P.json --solution S.json --out DIR --x0 ... [--degree ...]
    albrekht spectrum    --input P.json --out DIR [--degree]

Every command writes a manifest.json next to its outputs.  Exit codes:
0 success, 1 bad input or internal error, 2 SARE divergence / iteration
limit or finite escape of the Riccati flow, 3 singular degree operator.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AlbrekhtError, DivergenceError, OperatorSingularError
from .hjb import (
    SeriesSolution,
    build_deterministic_operator,
    build_noise_operator,
    lemma1_certificate,
    residual_profile,
    solve_hjb_series,
)
from .problem_file import ProblemFileError, load_problem
from .sare import sare_iterate
from .sde import SimConfig, compare_feedbacks, results_csv
from .sdre import integrate_pi3, integrate_sdre

log = logging.getLogger("albrekht")

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED, EXIT_SINGULAR = 0, 1, 2, 3


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=1, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(args, argv, started: float, status: int) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    inputs = {}
    for key in ("input", "solution"):
        p = config.get(key)
        if p and Path(p).is_file():
            inputs[key] = {"path": str(Path(p).resolve()), "sha256": _sha256(p)}
    return {
        "command": ["albrekht", *argv],
        "config": config,
        "inputs": inputs,
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "exit_code": status,
    }


# commands -----------------------------------------------------------------

def cmd_solve_sare(args) -> int:
    bundle = load_problem(args.input)
    res = sare_iterate(bundle.lin, tol=args.tol, max_iter=args.max_iter)
    out = Path(args.out)
    write_atomic(out / "history.csv", res.history_csv())
    write_json(
        out / "sare.json",
        {
            "status": res.status,
            "iterations": res.iterations,
            "reason": res.reason,
            "P": res.P,
            "K": np.atleast_2d(res.K),
        },
    )
    if not res.converged:
        print(f"SARE iteration {res.status} after {res.iterations} iterations: {res.reason}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_solve_hjb(args) -> int:
    bundle = load_problem(args.input)
    out = Path(args.out)
    try:
        sol = solve_hjb_series(bundle.problem, method=args.method, dps=args.dps, degree=args.degree)
    except OperatorSingularError as exc:
        cert = exc.certificate.to_dict() if exc.certificate is not None else None
        write_json(out / "certificate.json", {"degree": exc.degree, "certificate": cert})
        print(f"{exc}; certificate written to {out / 'certificate.json'}", file=sys.stderr)
        return EXIT_SINGULAR
    write_json(out / "solution.json", sol.to_dict())
    write_json(out / "certificates.json", {str(d): c.to_dict() for d, c in sol.certificates.items()})
    write_atomic(out / "report.txt", sol.report() + "\n")
    if sol.max_degree > 2:
        prof = residual_profile(bundle.problem.with_cap(sol.max_degree), sol, dps=args.dps)
        write_json(out / "residual_order.json", prof.to_dict())
    return EXIT_OK


def cmd_solve_sdre(args) -> int:
    bundle = load_problem(args.input)
    tv = bundle.time_varying(args.horizon)
    try:
        traj = integrate_pi3(tv, args.steps) if args.cubic else integrate_sdre(tv, args.steps)
    except DivergenceError as exc:
        out = Path(args.out)
        write_json(out / "escape.json", {"message": str(exc), "bracket": list(exc.bracket or ())})
        print(f"{exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = Path(args.out)
    write_atomic(out / "trajectory.csv", traj.to_csv())
    write_json(out / "summary.json", {"T": tv.T, "steps": args.steps, "P0": traj.P[0], "K0": traj.K[0]})
    return EXIT_OK


def _load_feedback(path, n, m):
    data = json.loads(Path(path).read_text())
    if "pi" in data or "kappa" in data:
        sol = SeriesSolution.from_dict(data)
    else:
        sol = SeriesSolution(np.array(data["P"], dtype=float), np.atleast_2d(np.array(data["K"], dtype=float)))
    if sol.n != n or sol.m != m or np.atleast_2d(sol.K).shape != (m, n):
        raise ProblemFileError(f"{path}: solution is for n={sol.n}, m={sol.m} but the problem has n={n}, m={m}")
    return sol


def cmd_simulate(args) -> int:
    bundle = load_problem(args.input)
    p = bundle.problem
    sol = _load_feedback(args.solution, p.n, p.m)
    if len(args.x0) != p.n:
        raise ProblemFileError(f"--x0: got {len(args.x0)} entries, the problem has n={p.n}")
    cfg = SimConfig(args.x0, T=args.horizon, dt=args.dt, npaths=args.paths, seed=args.seed, keep_costs=args.dump_costs)
    degrees = args.degree or [None]
    fbs = [(f"degree{d}" if d is not None else "full", sol, d) for d in degrees]
    rows = compare_feedbacks(p, fbs, cfg)
    out = Path(args.out)
    write_atomic(out / "results.csv", results_csv(rows))
    if args.dump_costs:
        for label, res in rows:
            write_atomic(out / f"costs_{label}.csv", "\n".join(repr(float(c)) for c in res.costs) + "\n")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    bundle = load_problem(args.input)
    lin = bundle.lin
    res = sare_iterate(lin, tol=1e-12)
    if not res.converged:
        print(f"SARE iteration {res.status}: {res.reason}", file=sys.stderr)
        return EXIT_DIVERGED
    K = np.atleast_2d(res.K)
    A = lin.base.F + lin.base.G @ K
    Ms = lin.closed_loop_noise(K)
    report = {"closed_loop_eigenvalues": _complex_list(np.linalg.eigvals(A)), "degrees": {}}
    for d in range(2, args.degree + 1):
        M = build_deterministic_operator(A, d)
        N = build_noise_operator(Ms, d, lin.n)
        L = M + N - lin.base.alpha * np.eye(M.shape[0])
        cert = lemma1_certificate(lin, res.P, K, d)
        report["degrees"][str(d)] = {
            "deterministic": _complex_list(np.linalg.eigvals(M)),
            "stochastic": _complex_list(np.linalg.eigvals(L)),
            "certificate": cert.to_dict(),
        }
    write_json(Path(args.out) / "spectrum.json", report)
    return EXIT_OK


def _complex_list(ev):
    ev = sorted(ev, key=lambda z: (round(z.real, 12), round(z.imag, 12)))
    return [[float(z.real), float(z.imag)] for z in ev]


# parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="albrekht", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--input", required=True, help="problem file (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)
        return p

    p = common("solve-sare", cmd_solve_sare, "stationary stochastic Riccati equation")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=200)

    p = common("solve-hjb", cmd_solve_hjb, "power-series value function and feedback")
    p.add_argument("--degree", type=int, default=None, help="value degree (default: the file's degree_cap)")
    p.add_argument("--method", choices=("direct", "iterative"), default="direct")
    p.add_argument("--dps", type=int, default=None, help="solve in extended precision with this many digits")

    p = common("solve-sdre", cmd_solve_sdre, "finite-horizon Riccati flow")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--horizon", type=float, default=None, help="overrides terminal.T")
    p.add_argument("--cubic", action="store_true", help="also integrate the cubic value correction")

    p = common("simulate", cmd_simulate, "Monte Carlo cost of a computed feedback")
    p.add_argument("--solution", required=True, help="solution.json from solve-hjb or sare.json from solve-sare")
    p.add_argument("--x0", type=float, nargs="+", required=True)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--degree", type=int, nargs="*", help="feedback truncation degrees to compare")
    p.add_argument("--dump-costs", action="store_true")

    p = common("spectrum", cmd_spectrum, "degree-operator spectra and invertibility certificates")
    p.add_argument("--degree", type=int, default=4)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        status = args.func(args)
    except (ProblemFileError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_ERROR
    except (AlbrekhtError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_ERROR
    try:
        write_json(Path(args.out) / "manifest.json", _manifest(args, argv, started, status))
    except OSError as exc:
        print(f"error: could not write manifest: {exc}", file=sys.stderr)
        status = status or EXIT_ERROR
    return status


if __name__ == "__main__":
    sys.exit(main())
