"""Calibrate (alpha, beta) against the published N-m lines of each dataset preset.

    python3 scripts/calibrate_presets.py --out results/presets --presets twitter,sms

Writes one calibration trace per preset plus summary.csv comparing the fit
with the preset's reference (alpha, beta).
"""

import argparse
import csv
import time
from pathlib import Path

from groomsim.calibration import CalibrationTarget, calibrate
from groomsim.presets import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/presets")
    ap.add_argument("--presets", default=",".join(PRESETS))
    ap.add_argument("--groomers", type=int, default=200)
    ap.add_argument("--replicates", type=int, default=2)
    ap.add_argument("--budget", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in args.presets.split(","):
        p = PRESETS[name]
        target = CalibrationTarget(a=p.a, b=p.b, u_fixed=p.u_fixed, steps=p.steps, r0=p.r0,
                                   groomers=args.groomers, replicates=args.replicates, seed=args.seed)
        t0 = time.perf_counter()
        res = calibrate(target, budget=args.budget, threads=args.threads)
        with open(out / f"calibration_{name}.csv", "w", newline="") as fh:
            res.write_csv(fh)
        rows.append((name, p.alpha, res.alpha_hat, p.beta, res.beta_hat, res.objective,
                     res.converged, round(time.perf_counter() - t0, 1)))
        print(f"{name:15s} alpha {res.alpha_hat:6.3f} (ref {p.alpha:5.2f})  "
              f"beta {res.beta_hat:6.3f} (ref {p.beta:4.2f})  mse {res.objective:.3g}  "
              f"converged={res.converged}  {rows[-1][-1]}s")

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("preset", "alpha_ref", "alpha_hat", "beta_ref", "beta_hat", "mse", "converged", "seconds"))
        w.writerows(rows)


if __name__ == "__main__":
    main()
