"""Rejection rate of the weighted log-rank test, two exponential groups.

    python scripts/logrank_power.py --log-hr 0.8 --n 500 --replicates 1000
"""
import argparse

import numpy as np

from pedsurv.survival import SurvivalData, logrank_test


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--log-hr", type=float, default=0.8)
    ap.add_argument("--n", type=int, default=500, help="per group")
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    p = np.empty(args.replicates)
    for r in range(args.replicates):
        groups = []
        for hr in (1.0, np.exp(args.log_hr)):
            t = rng.exponential(1 / (0.02 * hr), args.n)
            c = rng.uniform(0, 100, args.n)
            groups.append(SurvivalData.from_arrays(np.minimum(t, c), t <= c))
        p[r] = logrank_test(groups).p_value
    print(f"rejection rate at {args.alpha}: {np.mean(p < args.alpha):.3f} over {args.replicates} replicates")


if __name__ == "__main__":
    main()
