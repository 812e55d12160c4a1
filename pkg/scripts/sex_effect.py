"""Distribution of the estimated female log hazard ratio across replicates.

    python scripts/sex_effect.py --beta -0.4 --replicates 50
"""
import argparse
import warnings

import numpy as np

from pedsurv.em import EMConfig, NotConvergedWarning, run_em
from pedsurv.genetics import GeneticModel
from pedsurv.simulate import SimulationConfig, load_template, simulate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--beta", type=float, default=-0.4)
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--q", type=float, default=0.004)
    args = ap.parse_args()
    warnings.simplefilter("ignore", NotConvergedWarning)

    template, gm = load_template(), GeneticModel(args.q)
    betas, ses = [], []
    for seed in range(args.replicates):
        sim = simulate(SimulationConfig(template, q=args.q, seed=1000 + seed, beta={"female": args.beta}))
        res = run_em(sim.dataset, gm, EMConfig(seed=seed, covariates=("female",)))
        betas.append(res.model.beta[0])
        ses.append(res.model.se[0])
        print(seed, round(betas[-1], 4), round(ses[-1], 4), flush=True)
    betas = np.array(betas)
    print(f"mean {betas.mean():.4f}  sd {betas.std(ddof=1):.4f}  mean se {np.mean(ses):.4f}  "
          f"range [{betas.min():.3f}, {betas.max():.3f}]")


if __name__ == "__main__":
    main()
