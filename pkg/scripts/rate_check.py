"""Monte-Carlo sup-norm rate of the isotonic estimator for LQ and power utilities."""
import argparse

from netpricing.isotonic import rate_validator
from netpricing.utility import UtilityModel

N_GRID = [100, 316, 1000, 3162, 10000]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    models = [UtilityModel.lq()] + [UtilityModel.power(g) for g in (0.2, 0.4, 0.6, 0.8)]
    for model in models:
        alpha = model.holder_exponent
        slope, errs = rate_validator(model, (0.0, 1.0), N_GRID, args.sigma, args.reps, seed=args.seed)
        errs_txt = " ".join(f"{e:.3g}" for e in errs)
        print(f"{model.kind:<6} alpha={alpha:.1f} slope={slope:.3f} expected={alpha / (2 * alpha + 1):.3f}  "
              f"sup errors: {errs_txt}")


if __name__ == "__main__":
    main()
