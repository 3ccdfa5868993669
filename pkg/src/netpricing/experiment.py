"""Configuration schema and the seeded regret sweep."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import stats

from .equilibrium import Market
from .errors import ConfigError, NetPricingError, SpecError
from .learner import LearnConfig, regret_slope, run_algorithm1
from .network import build_topology
from .pricing import PriceBox, optimize_prices
from .utility import UtilityModel

PRESETS = ("figure1", "figure2", "appendixC", "appendixG")
# observation noise used when a market does not set one
DEFAULT_SIGMA = {"lq": 0.05, "discrete_choice": 0.05, "power": 0.03}

Scalarish = Union[float, list, dict]


def _strict(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _vector(spec: Scalarish, n: int, name: str) -> np.ndarray:
    """Number, explicit list of n values, or {"lo", "hi"} linearly spaced."""
    if isinstance(spec, (int, float)):
        return np.full(n, float(spec))
    if isinstance(spec, dict):
        if set(spec) != {"lo", "hi"}:
            raise ConfigError(f"{name}: a range needs exactly 'lo' and 'hi'")
        return np.linspace(float(spec["lo"]), float(spec["hi"]), n)
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (n,):
        raise ConfigError(f"{name}: expected {n} values, got {arr.size}")
    return arr


@dataclass
class MarketSpec:
    name: str
    topology: dict
    utility: dict
    a: Scalarish
    b: Scalarish
    delta: float
    domain: list
    sigma: Optional[float] = None
    prices: Optional[Scalarish] = None

    @classmethod
    def from_dict(cls, d: dict, where: str = "market") -> "MarketSpec":
        _strict(cls, d, where)
        try:
            spec = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        spec.model  # validates the family
        if "n" not in spec.topology and spec.topology.get("kind") not in ("dense", "block_diag"):
            raise ConfigError(f"{where}: topology needs 'n'")
        return spec

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def model(self) -> UtilityModel:
        try:
            return UtilityModel.from_dict(self.utility)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"market {self.name!r}: bad utility {self.utility}: {exc}") from None

    @property
    def noise(self) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return DEFAULT_SIGMA.get(self.model.kind, 0.05)

    def build(self, seed: int = 0) -> Market:
        desc = dict(self.topology)
        desc["delta"] = float(self.delta)
        desc.setdefault("seed", seed)
        net = build_topology(desc)
        return Market.homogeneous(net, self.model, _vector(self.a, net.n, "a"), _vector(self.b, net.n, "b"),
                                  tuple(self.domain))

    def price_vector(self, n: int, override=None) -> np.ndarray:
        spec = override if override is not None else self.prices
        if spec is None:
            raise ConfigError(f"market {self.name!r}: no prices given")
        return _vector(spec, n, "prices")


@dataclass
class LearnSpec:
    beta: Optional[float] = 0.75
    c: float = 1.0
    exploration_mode: str = "consumption"
    segmentation: Union[None, str, list] = "all"
    known_intercepts: bool = True
    plugin_budget: int = 10_000

    def config(self, horizon: int, sigma: float, seed: int) -> LearnConfig:
        return LearnConfig(horizon, beta=self.beta, c=self.c, sigma=sigma, seed=seed,
                           exploration_mode=self.exploration_mode, segmentation=self.segmentation,
                           known_intercepts=self.known_intercepts, plugin_budget=self.plugin_budget)


@dataclass
class SweepSpec:
    horizons: list = field(default_factory=lambda: [25, 50, 75, 100, 125])
    reps: int = 10
    base_seed: int = 0
    workers: int = 1
    oracle_budget: int = 50_000

    def __post_init__(self):
        if not self.horizons or any(int(t) < 2 for t in self.horizons):
            raise ConfigError("sweep: horizons must be integers >= 2")
        if self.reps < 1 or self.workers < 1:
            raise ConfigError("sweep: reps and workers must be positive")


@dataclass
class ExperimentConfig:
    name: str
    markets: list
    learner: LearnSpec = field(default_factory=LearnSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    out: str = "results"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _strict(cls, d, "config")
        if "name" not in d or "markets" not in d:
            raise ConfigError("config: 'name' and 'markets' are required")
        markets = [MarketSpec.from_dict(m, f"markets[{k}]") for k, m in enumerate(d["markets"])]
        names = [m.name for m in markets]
        if len(set(names)) != len(names):
            raise ConfigError("config: market names must be unique")
        learner = d.get("learner", {})
        _strict(LearnSpec, learner, "learner")
        sweep = d.get("sweep", {})
        _strict(SweepSpec, sweep, "sweep")
        try:
            lspec = LearnSpec(**learner)
            lspec.config(2, 0.0, 0)
        except SpecError as exc:
            raise ConfigError(f"learner: {exc}") from None
        return cls(d["name"], markets, lspec, SweepSpec(**sweep), d.get("out", "results"))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "markets": [m.to_dict() for m in self.markets],
            "learner": asdict(self.learner),
            "sweep": asdict(self.sweep),
            "out": self.out,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str, source: str = "<string>") -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        try:
            return cls.from_dict(d)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    """Load a config file, or a shipped preset by name (e.g. ``figure1``)."""
    name = str(path)
    stem = name.removesuffix(".json")
    if stem in PRESETS and not os.path.exists(name):
        text = resources.files("netpricing.presets").joinpath(f"{stem}.json").read_text()
        return ExperimentConfig.loads(text, f"preset {stem}")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return ExperimentConfig.loads(text, name)


# -- seeding -------------------------------------------------------------------


def cell_seed(base_seed: int, *key: int) -> int:
    """Independent 63-bit seed for a sweep cell, derived from the base seed by key."""
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# -- sweep ---------------------------------------------------------------------


@dataclass
class CellResult:
    market: str
    horizon: int
    rep: int
    total_regret: float = math.nan
    p_hat: Optional[list] = None
    error: Optional[str] = None


def _run_cell(args):
    spec, lspec, box, oracle, horizon, rep, seed, trace_path, snap_path, net_seed = args
    try:
        mkt = spec.build(net_seed)
        tr = run_algorithm1(mkt, box, lspec.config(horizon, spec.noise, seed), oracle=oracle)
        if trace_path is not None:
            tr.to_csv(trace_path)
        if snap_path is not None and hasattr(tr.psi_hat, "fits"):
            tr.psi_hat.fits[0].to_csv(snap_path)
        return CellResult(spec.name, horizon, rep, tr.total_regret, [float(v) for v in tr.p_hat])
    except NetPricingError as exc:
        return CellResult(spec.name, horizon, rep, error=f"{type(exc).__name__}: {exc}")


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def summarize(horizons, regrets: dict) -> dict:
    """Mean regret per horizon with t-based 95% intervals (omitted for one rep)."""
    out = {"horizons": [int(t) for t in horizons], "mean_regret": []}
    ci = []
    for t in horizons:
        r = np.asarray(regrets.get(int(t), []), dtype=float)
        out["mean_regret"].append(float(r.mean()) if r.size else None)
        if r.size > 1:
            half = stats.t.ppf(0.975, r.size - 1) * r.std(ddof=1) / math.sqrt(r.size)
            ci.append([float(r.mean() - half), float(r.mean() + half)])
    if all(len(regrets.get(int(t), [])) > 1 for t in horizons):
        out["ci95"] = ci
    pts = [(t, m) for t, m in zip(out["horizons"], out["mean_regret"]) if m is not None and m > 0]
    out["slope"] = regret_slope(pts) if len(pts) >= 3 else None
    return out


def theory_slope(model: UtilityModel) -> Optional[float]:
    a = model.holder_exponent
    return None if a is None else (2 * a + 1) / (3 * a + 1)


def run_experiment(cfg: ExperimentConfig, out: Optional[Path] = None, reps: Optional[int] = None,
                   base_seed: Optional[int] = None, snapshots: bool = True) -> dict:
    """Sweep horizons x repetitions for every market and write all result files."""
    out = Path(out if out is not None else cfg.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    if snapshots:
        (out / "isotonic").mkdir(exist_ok=True)
    sweep = cfg.sweep
    reps = sweep.reps if reps is None else reps
    seed0 = sweep.base_seed if base_seed is None else base_seed
    cells, oracles, markets = [], {}, {}
    failed = []
    for mi, spec in enumerate(cfg.markets):
        net_seed = int(spec.topology.get("seed", seed0))
        try:
            mkt = spec.build(net_seed)
            box = PriceBox.from_market(mkt, seed=cell_seed(seed0, mi))
            oracle = optimize_prices(mkt, box, budget=sweep.oracle_budget, seed=cell_seed(seed0, mi, 0))
        except NetPricingError as exc:
            failed.append({"market": spec.name, "horizon": None, "rep": None,
                           "error": f"{type(exc).__name__}: {exc}"})
            continue
        markets[spec.name] = (mkt, box)
        oracles[spec.name] = oracle
        for t in sweep.horizons:
            for r in range(reps):
                trace = out / "traces" / f"{spec.name}_T{t}_r{r}.csv"
                snap = out / "isotonic" / f"{spec.name}_T{t}.csv" if snapshots and r == 0 else None
                cells.append((spec, cfg.learner, box, oracle, int(t), r, cell_seed(seed0, mi, int(t), r + 1),
                              trace, snap, net_seed))
    if sweep.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=sweep.workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    # barrier: everything below only reads finished cells
    summary = {}
    rows = []
    prices = []
    for spec in cfg.markets:
        if spec.name not in oracles:
            continue
        mine = [c for c in results if c.market == spec.name]
        regrets: dict = {}
        for c in mine:
            if c.error is None:
                regrets.setdefault(c.horizon, []).append(c.total_regret)
            else:
                failed.append({"market": c.market, "horizon": c.horizon, "rep": c.rep, "error": c.error})
        s = summarize(sweep.horizons, regrets)
        s["oracle_revenue"] = oracles[spec.name].revenue
        summary[spec.name] = s
        th = theory_slope(spec.model)
        rows.append([spec.name, "" if s["slope"] is None else _fmt(s["slope"]), "" if th is None else _fmt(th)])
        if spec.topology.get("kind") == "influencer":
            learned = np.array([c.p_hat for c in mine if c.error is None and c.horizon == max(sweep.horizons)])
            p_star = oracles[spec.name].p_star
            for i in range(p_star.size):
                mean_hat = _fmt(float(learned[:, i].mean())) if learned.size else ""
                prices.append([spec.name, i, _fmt(float(p_star[i])), mean_hat])

    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _write_csv(out / "slopes.csv", ["market", "slope", "theory"], rows)
    if prices:
        _write_csv(out / "prices.csv", ["market", "node", "oracle_price", "mean_learned_price"], prices)
    manifest = {"config": cfg.name, "cells": len(cells), "failed": failed}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return {"summary": summary, "failed": failed, "oracles": oracles}


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
