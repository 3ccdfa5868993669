"""Explore-then-commit pricing with isotonic estimates of the marginal response maps."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence, Union

import numpy as np

from .equilibrium import Market, price_map, solve_equilibrium
from .errors import (
    DomainError,
    InsufficientData,
    InsufficientPoints,
    NoConvergence,
    PreconditionError,
    SpecError,
)
from .isotonic import IsotonicFit, generalized_inverse, pava
from .network import Network
from .pricing import (
    OracleSolution,
    PriceBox,
    grid_ascent,
    interior_box,
    maximize_in_consumption_space,
    optimize_prices,
)

TIKHONOV = 1e-8
PLUGIN_BUDGET = 10_000
MODES = ("consumption", "price")


@dataclass
class LearnConfig:
    horizon: int
    beta: Optional[float] = None
    alpha: Optional[float] = None
    c: float = 1.0
    sigma: Union[float, Sequence[float]] = 0.05
    seed: int = 0
    exploration_mode: str = "consumption"
    segmentation: Union[None, str, Sequence[int]] = None
    known_intercepts: bool = False
    plugin_budget: int = PLUGIN_BUDGET

    def __post_init__(self):
        if self.horizon < 2:
            raise SpecError("horizon must be at least 2")
        if self.exploration_mode not in MODES:
            raise SpecError(f"exploration_mode must be one of {MODES}")
        if self.beta is None:
            # with no known smoothness the experiments' 0.75 is used
            a = self.alpha
            self.beta = 0.75 if a is None else (2 * a + 1) / (3 * a + 1)
        if not 0 < self.beta < 1:
            raise SpecError("beta must lie in (0, 1)")
        if self.c <= 0:
            raise SpecError("c must be positive")
        if np.any(np.asarray(self.sigma) < 0):
            raise SpecError("sigma must be nonnegative")
        if isinstance(self.segmentation, str) and self.segmentation != "all":
            raise SpecError("segmentation must be None, 'all' or a list of segment ids")

    @property
    def t0(self) -> int:
        return exploration_length(self.horizon, self.beta, self.c)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["sigma"], np.ndarray):
            d["sigma"] = d["sigma"].tolist()
        if d["segmentation"] is not None and not isinstance(d["segmentation"], str):
            d["segmentation"] = [int(s) for s in d["segmentation"]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LearnConfig":
        return cls(**d)


def exploration_length(horizon: int, beta: float, c: float = 1.0) -> int:
    """ceil(c T^beta), robust to round-off at exact integers, capped at T."""
    v = c * horizon**beta
    r = round(v)
    t0 = r if abs(v - r) <= 1e-9 * max(1.0, v) else math.ceil(v)
    return int(min(max(t0, 1), horizon))


# -- estimation ----------------------------------------------------------------


@dataclass
class Samples:
    """Exploration data: covariates x[t, i], responses y[t, i], a validity mask,
    and the offsets to subtract from fits of y (zero when y targets psi)."""

    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    offset: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[1]


class PsiHat:
    """Per-consumer monotone estimate psi_i(x) = fit_{s(i)}(x) - offset_i."""

    def __init__(self, fits: Sequence[IsotonicFit], assign, offset):
        self.fits = list(fits)
        self.assign = np.asarray(assign, dtype=int)
        self.offset = np.asarray(offset, dtype=float)
        self._groups = [(k, np.flatnonzero(self.assign == k)) for k in range(len(self.fits))]

    @property
    def n(self) -> int:
        return self.assign.size

    def fit_for(self, i: int) -> IsotonicFit:
        return self.fits[self.assign[i]]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(self.n)
        for k, ix in self._groups:
            f = self.fits[k]
            out[ix] = np.interp(x[ix], f.knots, f.values)
        return out - self.offset

    def coordinate(self, i: int, x) -> np.ndarray:
        f = self.fit_for(i)
        return np.interp(x, f.knots, f.values) - self.offset[i]

    def inverse(self, z, lo, hi) -> np.ndarray:
        """Coordinate-wise generalized inverse of psi_hat, clipped to [lo, hi]."""
        z = np.asarray(z, dtype=float) + self.offset
        out = np.empty(self.n)
        for k, ix in self._groups:
            out[ix] = generalized_inverse(self.fits[k], z[ix], lo[ix], hi[ix])
        return out


class ExactPsi:
    """The true psi = phi - a of a market, with the PsiHat interface."""

    def __init__(self, mkt: Market):
        self.mkt = mkt

    @property
    def n(self) -> int:
        return self.mkt.n

    def __call__(self, x) -> np.ndarray:
        return self.mkt.phi(x) - self.mkt.a

    def coordinate(self, i: int, x) -> np.ndarray:
        c = self.mkt.consumers[i]
        return c.model.phi(x) - c.a

    def inverse(self, z, lo, hi) -> np.ndarray:
        mkt = self.mkt
        return np.clip(mkt.project_inverse(np.asarray(z) + mkt.a), lo, hi)


def _segments(segmentation, n: int) -> np.ndarray:
    if segmentation is None:
        return np.arange(n)
    if isinstance(segmentation, str):
        if segmentation != "all":
            raise SpecError(f"unknown segmentation {segmentation!r}")
        return np.zeros(n, dtype=int)
    seg = np.asarray(segmentation)
    if seg.shape != (n,):
        raise SpecError(f"segmentation needs {n} entries")
    _, inv = np.unique(seg, return_inverse=True)
    return inv.astype(int)


def fit_psi(samples: Samples, segmentation=None) -> PsiHat:
    """Isotonic fit per consumer, or per segment with pooled samples."""
    assign = _segments(segmentation, samples.n)
    fits = []
    for k in range(assign.max() + 1):
        cols = np.flatnonzero(assign == k)
        m = samples.mask[:, cols]
        xs = samples.x[:, cols][m]
        ys = samples.y[:, cols][m]
        if xs.size < 2:
            raise InsufficientData(f"segment {k} has {xs.size} samples")
        fits.append(pava(xs, ys))
    return PsiHat(fits, assign, samples.offset)


# -- exploration ---------------------------------------------------------------


def _sigma(cfg: LearnConfig, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(cfg.sigma, dtype=float), (n,)).copy()


def explore(mkt: Market, box: PriceBox, cfg: LearnConfig, rng: Optional[np.random.Generator] = None,
            t0: Optional[int] = None):
    """Run the exploration rounds. Returns ``(samples, prices, revenues)``."""
    if not mkt.conditions.variational_holds:
        raise PreconditionError("exploration needs a positive variational margin")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    t0 = cfg.t0 if t0 is None else t0
    n = mkt.n
    sig = _sigma(cfg, n)
    dg = mkt.net.dg
    xs = np.empty((t0, n))
    ys = np.empty((t0, n))
    mask = np.ones((t0, n), dtype=bool)
    prices = np.empty((t0, n))
    revs = np.empty(t0)
    intercept = mkt.a if cfg.known_intercepts else np.zeros(n)
    z_lo, z_hi = interior_box(mkt)
    for t in range(t0):
        if cfg.exploration_mode == "consumption":
            target = rng.uniform(z_lo, z_hi)
            q = price_map(mkt, target)
            p = box.project(q)
            x_true = target if np.array_equal(p, q) else solve_equilibrium(mkt, p).x
            x_obs = mkt.project(x_true + sig * rng.standard_normal(n))
            y = intercept - mkt.b * p + dg @ x_obs
            if x_true is not target:
                # a clipped price can push consumers onto a bound
                mask[t] = (x_true > mkt.lo) & (x_true < mkt.hi)
        else:
            p = box.sample(rng)
            xi = sig * rng.standard_normal(n)
            x_obs = solve_equilibrium(mkt, p, shift=-xi).x
            x_true = x_obs if not np.any(xi) else solve_equilibrium(mkt, p).x
            y = intercept - mkt.b * p + dg @ x_obs
            # the response identity only holds off the bounds
            mask[t] = (x_obs > mkt.lo) & (x_obs < mkt.hi)
        xs[t], ys[t], prices[t] = x_obs, y, p
        revs[t] = float(p @ x_true)
    return Samples(xs, ys, mask, intercept.copy()), prices, revs


# -- plug-in equilibrium --------------------------------------------------------


@dataclass
class PlugInResult:
    x: np.ndarray
    residual: float
    iterations: int
    epsilon: float


def plug_in_equilibrium(psi_hat, net: Network, b, p, lo, hi, tol: float = 1e-10,
                        max_iter: int = 100_000, epsilon: float = TIKHONOV, x0=None) -> PlugInResult:
    """Solve psi_hat(x) + eps x - delta G x = -B p on the box as a variational
    inequality, by projected forward-backward-forward steps with backtracking."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    bp = np.asarray(b, dtype=float) * np.asarray(p, dtype=float)
    dg = net.dg

    def op(x):
        return psi_hat(x) + epsilon * x + bp - dg @ x

    def residual(x, fx):
        return float(np.max(np.abs(x - np.clip(x - fx, lo, hi))))

    if net.n == 0:
        return PlugInResult(np.empty(0), 0.0, 0, epsilon)
    if not np.any(dg):
        # decoupled: exact coordinate-wise generalized inverse
        x = _coordinate_solve(psi_hat, epsilon, -bp, lo, hi)
        return PlugInResult(x, residual(x, op(x)), 1, epsilon)
    if net.is_nonnegative():
        return _isotone_solve(psi_hat, dg, epsilon, bp, lo, hi, tol, max_iter, residual, op)
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.asarray(x0, dtype=float), lo, hi)
    fx = op(x)
    lam = 1.0
    for k in range(1, max_iter + 1):
        res = residual(x, fx)
        if res <= tol:
            return PlugInResult(x, res, k - 1, epsilon)
        while True:
            y = np.clip(x - lam * fx, lo, hi)
            fy = op(y)
            dy = np.linalg.norm(y - x)
            if lam * np.linalg.norm(fy - fx) <= 0.9 * dy or dy == 0.0:
                break
            lam *= 0.5
            if lam < 1e-16:
                raise NoConvergence("step size underflow in plug-in solve", x, k)
        x = np.clip(y - lam * (fy - fx), lo, hi)
        fx = op(x)
        lam = min(lam * 1.5, 1e6)
    raise NoConvergence(f"plug-in solve did not converge in {max_iter} steps", x, max_iter)


def _isotone_solve(psi_hat, dg, epsilon, bp, lo, hi, tol, max_iter, residual, op) -> PlugInResult:
    """Best-response sweeps from the lower corner.

    Flat fitted segments can break monotonicity of the plug-in operator, but with
    G >= 0 the best response is order preserving, so the sweeps rise to the
    least solution.
    """
    x = lo.copy()
    for k in range(1, max_iter + 1):
        x_new = np.maximum(_coordinate_solve(psi_hat, epsilon, dg @ x - bp, lo, hi), x)
        step = float(np.max(np.abs(x_new - x)))
        x = x_new
        if step <= tol:
            res = residual(x, op(x))
            if res <= tol or step == 0.0:
                return PlugInResult(x, res, k, epsilon)
    raise NoConvergence(f"plug-in sweeps did not converge in {max_iter} steps", x, max_iter)


def _coordinate_solve(psi_hat, epsilon, rhs, lo, hi) -> np.ndarray:
    """Root of psi_hat_i(x) + eps x = rhs_i per coordinate, by bisection."""
    a, b = lo.copy(), hi.copy()
    fa = psi_hat(a) + epsilon * a - rhs
    fb = psi_hat(b) + epsilon * b - rhs
    x = np.where(fa >= 0, lo, np.where(fb <= 0, hi, np.nan))
    todo = np.isnan(x)
    for _ in range(200):
        if not todo.any():
            break
        mid = 0.5 * (a + b)
        fm = psi_hat(mid) + epsilon * mid - rhs
        up = fm < 0
        a = np.where(todo & up, mid, a)
        b = np.where(todo & ~up, mid, b)
        todo = todo & (b - a > 1e-15 * np.maximum(1.0, np.abs(a)))
    return np.where(np.isnan(x), 0.5 * (a + b), x)


# -- full run ------------------------------------------------------------------


@dataclass
class LearnTrace:
    t: np.ndarray
    phase: list
    prices: np.ndarray
    observed: np.ndarray
    revenue: np.ndarray
    oracle_revenue: float
    regret: np.ndarray
    t0: int
    p_hat: np.ndarray
    psi_hat: object = field(repr=False, default=None)
    epsilon: float = TIKHONOV
    oracle: Optional[OracleSolution] = field(repr=False, default=None)

    @property
    def total_regret(self) -> float:
        return float(self.regret[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "phase", "revenue", "regret"])
            for t, ph, r, g in zip(self.t, self.phase, self.revenue, self.regret):
                w.writerow([int(t), ph, f"{r:.17g}", f"{g:.17g}"])


def plug_in_prices(mkt: Market, psi_hat, box: PriceBox, budget: int = PLUGIN_BUDGET, seed: int = 0):
    """Maximize z^T Q_hat(z) with Q_hat(z) = B^-1 (-psi_hat(z) + delta G z)."""
    dg = mkt.net.dg
    b = mkt.b

    def qhat(z):
        return (dg @ z - psi_hat(z)) / b

    z_lo, z_hi = interior_box(mkt)
    init = grid_ascent(np.zeros(mkt.n), b, dg, psi_hat.coordinate, z_lo, z_hi, box)
    z, p, _, _ = maximize_in_consumption_space(qhat, z_lo, z_hi, box, budget, seed, init=init)
    return box.project(p), z


def run_algorithm1(mkt: Market, box: PriceBox, cfg: LearnConfig, oracle: Optional[OracleSolution] = None,
                   psi=None) -> LearnTrace:
    """Explore for T0 rounds, fit, then post the plug-in maximizer for the rest.

    ``psi`` injects a known response map and skips estimation. ``oracle`` reuses
    a precomputed benchmark.
    """
    ss = np.random.SeedSequence(cfg.seed)
    explore_ss, opt_ss = ss.spawn(2)
    rng = np.random.default_rng(explore_ss)
    t0 = cfg.t0
    n = mkt.n
    if oracle is None:
        oracle = optimize_prices(mkt, box, seed=int(opt_ss.generate_state(1)[0]))
    if psi is None:
        samples, ex_prices, ex_revs = explore(mkt, box, cfg, rng, t0)
        psi_hat = fit_psi(samples, cfg.segmentation)
        ex_obs = samples.x
    else:
        if not mkt.conditions.variational_holds:
            raise PreconditionError("exploration needs a positive variational margin")
        psi_hat = psi
        t0 = 0
        ex_prices, ex_revs, ex_obs = np.empty((0, n)), np.empty(0), np.empty((0, n))
    horizon = cfg.horizon
    n_exploit = horizon - t0
    p_hat = np.full(n, np.nan)
    exploit_rev = np.nan
    x_hat = np.full(n, np.nan)
    if n_exploit > 0:
        p_hat, _ = plug_in_prices(mkt, psi_hat, box, cfg.plugin_budget, int(opt_ss.generate_state(2)[1]))
        x_hat = solve_equilibrium(mkt, p_hat).x
        exploit_rev = float(p_hat @ x_hat)
    prices = np.vstack([ex_prices, np.tile(p_hat, (n_exploit, 1))])
    observed = np.vstack([ex_obs, np.tile(x_hat, (n_exploit, 1))])
    revs = np.concatenate([ex_revs, np.full(n_exploit, exploit_rev)])
    regret = np.cumsum(oracle.revenue - revs)
    phase = ["explore"] * t0 + ["exploit"] * n_exploit
    return LearnTrace(np.arange(1, horizon + 1), phase, prices, observed, revs, oracle.revenue, regret,
                      t0, p_hat, psi_hat, TIKHONOV, oracle)


def regret_slope(runs) -> float:
    """OLS slope of log R(T) on log T."""
    runs = list(runs)
    if len(runs) < 3:
        raise InsufficientPoints(f"need at least 3 horizons, got {len(runs)}")
    t = np.array([r[0] for r in runs], dtype=float)
    r = np.array([r[1] for r in runs], dtype=float)
    if np.any(t <= 0) or np.any(r <= 0):
        raise DomainError("log-log slope needs positive horizons and regrets")
    return float(np.polyfit(np.log(t), np.log(r), 1)[0])
