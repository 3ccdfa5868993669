"""Regret sweep on the circular network for every utility family; prints the slope table."""
import argparse
import json
from pathlib import Path

from netpricing.experiment import load_config, run_experiment, theory_slope


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/regret_sweep")
    ap.add_argument("--reps", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config("figure1")
    cfg.sweep.workers = args.workers
    res = run_experiment(cfg, Path(args.out), reps=args.reps, base_seed=args.seed)
    print(f"{'market':<12}{'slope':>8}{'theory':>8}")
    for spec in cfg.markets:
        s = res["summary"].get(spec.name)
        if s is None:
            continue
        th = theory_slope(spec.model)
        slope = "n/a" if s["slope"] is None else f"{s['slope']:.3f}"
        print(f"{spec.name:<12}{slope:>8}{'n/a' if th is None else f'{th:.3f}':>8}")
    if res["failed"]:
        print(json.dumps(res["failed"], indent=2))


if __name__ == "__main__":
    main()
