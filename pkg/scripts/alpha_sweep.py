"""Sweep the cost gradient alpha at Twitter-shaped budget and report a and the tail exponent.

    python3 scripts/alpha_sweep.py --out results/sweep.csv --replicates 10
"""

import argparse

from groomsim.calibration import SweepSettings, sweep_alpha, write_sweep_csv
from groomsim.presets import get_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alphas", default="0,0.5,1,2,4")
    ap.add_argument("--preset", default="twitter", help="source of beta, r0 and steps")
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--groomers", type=int, default=200)
    ap.add_argument("--xmin", type=int, default=10, help="lower end of the power-law tail")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    p = get_preset(args.preset)
    settings = SweepSettings(beta=p.beta, r0=p.r0, steps=p.steps, groomers=args.groomers,
                             replicates=args.replicates, seed=args.seed, plexp_xmin=args.xmin)
    rows = sweep_alpha([float(a) for a in args.alphas.split(",")], settings, threads=args.threads)
    for r in rows:
        print(f"alpha {r.alpha:5.2f}  a {r.a_mean:.4f} +- {r.a_sd:.4f}  "
              f"exponent {r.plexp_mean:.3f} +- {r.plexp_sd:.3f}")
    with open(args.out, "w", newline="") as fh:
        write_sweep_csv(rows, fh)


if __name__ == "__main__":
    main()
