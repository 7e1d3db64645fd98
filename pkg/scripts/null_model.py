"""Null model check: with a flat cost (alpha = 0) the fitted N-m slope a should be 1.

    python3 scripts/null_model.py --seeds 10
"""

import argparse

import numpy as np

from groomsim.model import SimConfig, run_simulation
from groomsim.presets import get_preset
from groomsim.stats import fit_nm_arrays


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="twitter")
    ap.add_argument("--beta", type=float, default=None, help="defaults to the preset's beta")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--groomers", type=int, default=200)
    args = ap.parse_args()

    p = get_preset(args.preset)
    beta = p.beta if args.beta is None else args.beta
    fits = []
    for seed in range(args.seeds):
        cfg = SimConfig(alpha=0.0, beta=beta, r0=p.r0, steps=p.steps, groomers=args.groomers, seed=seed)
        fits.append(fit_nm_arrays(*run_simulation(cfg).nmu()))
        print(f"seed {seed}: a = {fits[-1].a:.6f}  b = {fits[-1].b:.6f}")
    a = np.array([f.a for f in fits])
    print(f"mean a = {a.mean():.6f}  sd = {a.std(ddof=1) if len(a) > 1 else 0.0:.2e}")


if __name__ == "__main__":
    main()
