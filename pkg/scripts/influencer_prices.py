"""Influencer-network run: oracle and mean learned price per node for each family."""
import argparse
import csv
from pathlib import Path

from netpricing.experiment import load_config, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/influencer_prices")
    ap.add_argument("--reps", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    out = Path(args.out)
    run_experiment(load_config("figure2"), out, reps=args.reps, base_seed=args.seed)
    with open(out / "prices.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for market in dict.fromkeys(r["market"] for r in rows):
        mine = [r for r in rows if r["market"] == market]
        learned = [float(r["mean_learned_price"]) for r in mine]
        lowest = min(range(len(learned)), key=learned.__getitem__)
        print(f"{market}: node 0 learned {learned[0]:.3f}, others "
              f"{min(learned[1:]):.3f}..{max(learned[1:]):.3f}, cheapest node {lowest}")


if __name__ == "__main__":
    main()
