"""Pendulum power series: solve both fixtures, write coefficient match reports and residual slopes."""
import argparse
import json
from pathlib import Path

from albrekht.examples import format_match_report, pendulum, pendulum_match_report
from albrekht.hjb import residual_profile, solve_hjb_series


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "reports"))
    parser.add_argument("--dps", type=int, default=40, help="digits for the residual-order check")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for variant in ("dynamics", "printed"):
        prob = pendulum(variant)
        sol = solve_hjb_series(prob)
        rows = pendulum_match_report(sol)
        text = format_match_report(rows)
        (out / f"pendulum_{variant}_match.txt").write_text(text + "\n")
        print(f"== {variant} variant")
        print(sol.report())
        print(text)
        prof = residual_profile(prob, solve_hjb_series(prob, dps=args.dps), dps=args.dps)
        (out / f"pendulum_{variant}_residual.json").write_text(json.dumps(prof.to_dict(), indent=1) + "\n")
        print(f"residual slopes: value {prof.value_slope:.3f}, feedback {prof.gain_slope:.3f}\n")


if __name__ == "__main__":
    main()
