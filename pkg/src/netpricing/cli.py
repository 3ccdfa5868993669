"""Command-line entry point: netpricing {conditions,equilibrium,price,iiv,learn,experiment}."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .equilibrium import solve_equilibrium
from .errors import ConfigError, NetPricingError, NumericalError, ShapeError
from .experiment import ExperimentConfig, MarketSpec, cell_seed, load_config, run_experiment
from .network import symmetric_nonneg_threshold
from .pricing import PriceBox, iiv, optimize_prices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _emit(args, name: str, payload, table: Optional[tuple] = None) -> None:
    """Write JSON (or a CSV table) to stdout, or into --out when given."""
    if args.format == "csv" and table is not None:
        header, rows = table
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        text, ext = buf.getvalue(), "csv"
    else:
        text, ext = json.dumps(payload, indent=2) + "\n", "json"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.{ext}").write_text(text)
    else:
        sys.stdout.write(text)


def _markets(cfg: ExperimentConfig, only: Optional[str]) -> list[MarketSpec]:
    if only is None:
        return cfg.markets
    chosen = [m for m in cfg.markets if m.name == only]
    if not chosen:
        raise ConfigError(f"no market named {only!r}")
    return chosen


def _seed(args, cfg: ExperimentConfig) -> int:
    return cfg.sweep.base_seed if args.seed is None else args.seed


def cmd_conditions(args, cfg) -> None:
    out, rows = {}, []
    for spec in _markets(cfg, args.market):
        mkt = spec.build(int(spec.topology.get("seed", _seed(args, cfg))))
        rep = mkt.conditions.to_dict()
        try:
            thr = symmetric_nonneg_threshold(mkt.net, mkt.d)
            rep["symmetric_threshold"] = thr if np.isfinite(thr) else None
        except ShapeError:
            rep["symmetric_threshold"] = None
        out[spec.name] = rep
        rows.append([spec.name] + [rep[k] for k in ("contraction_rho", "contraction_holds",
                                                      "variational_lambda_min", "variational_holds")])
    _emit(args, "conditions", out, (["market", "contraction_rho", "contraction_holds",
                                     "variational_lambda_min", "variational_holds"], rows))


def cmd_equilibrium(args, cfg) -> None:
    out, rows = {}, []
    for spec in _markets(cfg, args.market):
        mkt = spec.build(int(spec.topology.get("seed", _seed(args, cfg))))
        p = spec.price_vector(mkt.n, args.price)
        res = solve_equilibrium(mkt, p, route=args.route)
        out[spec.name] = {**res.to_dict(), "x": res.x.tolist(), "p": p.tolist()}
        rows += [[spec.name, i, _fmt(x), _fmt(pi)] for i, (x, pi) in enumerate(zip(res.x, p))]
    _emit(args, "equilibrium", out, (["market", "i", "x_i", "p_i"], rows))


def cmd_price(args, cfg) -> None:
    out, rows = {}, []
    seed = _seed(args, cfg)
    for mi, spec in enumerate(_markets(cfg, args.market)):
        mkt = spec.build(int(spec.topology.get("seed", seed)))
        box = PriceBox.from_market(mkt, seed=cell_seed(seed, mi))
        sol = optimize_prices(mkt, box, budget=args.budget or cfg.sweep.oracle_budget, seed=cell_seed(seed, mi, 0))
        out[spec.name] = sol.to_dict()
        rows += [[spec.name, i, _fmt(p), _fmt(x)] for i, (p, x) in enumerate(zip(sol.p_star, sol.x_star))]
    _emit(args, "price", out, (["market", "i", "p_i", "x_i"], rows))


def cmd_iiv(args, cfg) -> None:
    out, rows = {}, []
    for spec in _markets(cfg, args.market):
        mkt = spec.build(int(spec.topology.get("seed", _seed(args, cfg))))
        rep = iiv(mkt)
        out[spec.name] = rep.to_dict()
        rows += [[spec.name, i, _fmt(v)] for i, v in enumerate(rep.v)]
    _emit(args, "iiv", out, (["market", "i", "v_i"], rows))


def _sweep(args, cfg, reps, snapshots: bool) -> int:
    out = Path(args.out) if args.out else Path(cfg.out)
    res = run_experiment(cfg, out, reps=reps, base_seed=args.seed, snapshots=snapshots)
    for name, s in res["summary"].items():
        slope = "n/a" if s["slope"] is None else f"{s['slope']:.4f}"
        print(f"{name}: slope {slope}, mean regret {s['mean_regret']}")
    if res["failed"]:
        print(f"{len(res['failed'])} failed cell(s), see {out / 'manifest.json'}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_learn(args, cfg) -> int:
    if args.market is not None:
        cfg.markets = _markets(cfg, args.market)
    return _sweep(args, cfg, args.seeds, snapshots=False)


def cmd_experiment(args, cfg) -> int:
    if args.market is not None:
        cfg.markets = _markets(cfg, args.market)
    return _sweep(args, cfg, None, snapshots=True)


COMMANDS = {
    "conditions": cmd_conditions,
    "equilibrium": cmd_equilibrium,
    "price": cmd_price,
    "iiv": cmd_iiv,
    "learn": cmd_learn,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netpricing", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config JSON path or preset name")
        p.add_argument("--seed", type=int, default=None, help="base seed override")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--market", default=None, help="restrict to one market by name")
        if name == "equilibrium":
            p.add_argument("--price", type=float, default=None, help="uniform price override")
            p.add_argument("--route", choices=("auto", "contraction", "monotone"), default="auto")
        if name == "price":
            p.add_argument("--budget", type=int, default=None)
        if name == "learn":
            p.add_argument("--seeds", type=int, default=None, help="repetitions per horizon")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        code = COMMANDS[args.command](args, cfg)
        return EXIT_OK if code is None else code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NetPricingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
