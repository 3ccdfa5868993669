"""Seller side: revenue, consumption-space price optimization, closed forms, IIV."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.stats import qmc

from .equilibrium import Market, price_map, solve_equilibrium
from .errors import (
    BracketError,
    BudgetExhausted,
    DegenerateError,
    DimensionError,
    PreconditionError,
    RangeError,
    SpecError,
    StabilityError,
    StructureError,
)
from .network import spectral_radius_nonneg
from .utility import UtilityModel

ORACLE_BUDGET = 50_000
INTERIOR_MARGIN = 1e-6


@dataclass(frozen=True, eq=False)
class PriceBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float).ravel()
        hi = np.array(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise DimensionError("price box bounds differ in length")
        if np.any(lo < 0) or np.any(lo > hi):
            raise SpecError("price box needs 0 <= lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def uniform(cls, n: int, lo: float, hi: float) -> "PriceBox":
        return cls(np.full(n, lo), np.full(n, hi))

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def p_bar(self) -> float:
        return float(np.max(self.hi))

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def project(self, p) -> np.ndarray:
        return np.clip(p, self.lo, self.hi)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)

    @classmethod
    def from_market(cls, mkt: Market, n_samples: int = 1000, seed: int = 0,
                    margin: float = 1e-3) -> "PriceBox":
        """Per-coordinate range of the price map over a Latin-hypercube sample of
        the interior consumption box, intersected with [0, inf)."""
        lo, hi = interior_box(mkt, margin)
        u = qmc.LatinHypercube(d=mkt.n, seed=seed).random(n_samples)
        z = lo + u * (hi - lo)
        q = np.array([price_map(mkt, zi) for zi in z])
        return cls(np.maximum(q.min(axis=0), 0.0), np.maximum(q.max(axis=0), 0.0))


def interior_box(mkt: Market, margin: float = INTERIOR_MARGIN) -> tuple[np.ndarray, np.ndarray]:
    w = mkt.hi - mkt.lo
    return mkt.lo + margin * w, mkt.hi - margin * w


@dataclass
class OracleSolution:
    p_star: np.ndarray
    x_star: np.ndarray
    revenue: float
    evaluations: int
    route: str = ""

    def to_dict(self) -> dict:
        return {
            "p_star": [float(v) for v in self.p_star],
            "x_star": [float(v) for v in self.x_star],
            "revenue": float(self.revenue),
            "route": self.route,
            "evaluations": int(self.evaluations),
        }


def revenue(mkt: Market, p) -> float:
    """p^T x*(p) with the certified equilibrium."""
    p = np.broadcast_to(np.asarray(p, dtype=float), (mkt.n,))
    return float(p @ solve_equilibrium(mkt, p).x)


class _Budget(Exception):
    pass


def maximize_in_consumption_space(
    qmap: Callable[[np.ndarray], np.ndarray],
    z_lo: np.ndarray,
    z_hi: np.ndarray,
    box: PriceBox,
    budget: int,
    seed: int = 0,
    n_starts: Optional[int] = None,
    init: Optional[np.ndarray] = None,
):
    """Maximize z^T Q(z) over the consumption box by multi-start Nelder-Mead.

    Points whose price Q(z) leaves ``box`` score z^T proj(Q(z)) minus a penalty
    proportional to the distance to the box, so the search is pulled back
    toward feasible prices instead of stalling on a plateau. Each of
    ``n_starts`` seeded starts gets a screening run; the best is then refined
    with the rest of the budget by restarted simplex runs. ``init`` is an
    extra start placed first in the tie-break order. Returns ``(z, p, value, evaluations)``.
    """
    n = z_lo.size
    n_starts = n_starts or max(8, 2 * n)
    rng = np.random.default_rng(seed)
    penalty = 1.0 + float(np.max(np.abs(np.concatenate([z_lo, z_hi]))))
    count = 0
    best = [None, -math.inf]

    def objective(z):
        nonlocal count
        if count >= budget:
            raise _Budget
        count += 1
        p = qmap(z)
        pp = box.project(p)
        val = float(z @ pp)
        if not np.array_equal(p, pp):
            val -= penalty * float(np.sum(np.abs(p - pp)))
        if val > best[1]:
            best[0], best[1] = z.copy(), val
        return -val

    bounds = list(zip(z_lo, z_hi))

    def run(x0, maxfev):
        opts = dict(maxfev=maxfev, xatol=1e-10, fatol=1e-13, adaptive=n > 2)
        try:
            minimize(objective, x0, method="Nelder-Mead", bounds=bounds, options=opts)
        except _Budget:
            pass

    screen = max(budget // (2 * n_starts), 2 * (n + 1))
    starts = [0.5 * (z_lo + z_hi)] + [rng.uniform(z_lo, z_hi) for _ in range(n_starts - 1)]
    if init is not None:
        starts.insert(0, np.clip(np.asarray(init, dtype=float), z_lo, z_hi))
    results = []
    for x0 in starts:
        if count >= budget:
            break
        best[0], best[1] = None, -math.inf
        run(x0, screen)
        results.append((best[1], best[0]))
    # deterministic merge: highest value, ties by lowest start index
    top = max(range(len(results)), key=lambda k: (results[k][0], -k))
    best[1], best[0] = results[top]
    while count < budget and best[0] is not None:
        prev = best[1]
        run(best[0].copy(), budget - count)
        if best[1] - prev <= 1e-13 * max(1.0, abs(prev)):
            break
    if best[0] is None or not math.isfinite(best[1]):
        raise BudgetExhausted("no finite revenue found within budget", best=best[0])
    z = best[0]
    return z, qmap(z), best[1], count


def grid_ascent(c, b, dg, f_coord, z_lo, z_hi, box: PriceBox, n_grid: int = 401,
                sweeps: int = 3) -> np.ndarray:
    """Coordinate-wise grid maximization of z^T Q(z) for Q(z) = (c - f(z) + dG z) / b
    with f acting coordinate-wise; ``f_coord(i, grid)`` evaluates f_i.

    The objective is piecewise smooth in each coordinate, so a grid sweep gives a
    start that simplex search cannot reach on its own when f has kinks.
    """
    n = c.size
    z = 0.5 * (z_lo + z_hi)
    for _ in range(sweeps):
        for i in range(n):
            grid = np.linspace(z_lo[i], z_hi[i], n_grid)
            q = (c[i] - f_coord(i, grid) + dg[i] @ z) / b[i]
            # others' revenue z_j p_j is linear in z_i through dg[j, i]
            cross = float(dg[:, i] @ (z / b))
            obj = grid * (q + cross)
            ok = (q >= box.lo[i]) & (q <= box.hi[i])
            if ok.any():
                z[i] = grid[np.flatnonzero(ok)[np.argmax(obj[ok])]]
    return z


def optimize_prices(mkt: Market, box: PriceBox, budget: int = ORACLE_BUDGET, seed: int = 0,
                    n_starts: Optional[int] = None) -> OracleSolution:
    """Revenue-maximizing prices, searched over interior consumption profiles z
    through the price map Q(z)."""
    if box.n != mkt.n:
        raise DimensionError("price box and market differ in size")
    z_lo, z_hi = interior_box(mkt)

    def qmap(z):
        return price_map(mkt, z)

    init = grid_ascent(mkt.a, mkt.b, mkt.net.dg, lambda i, g: mkt.consumers[i].model.phi(g), z_lo, z_hi, box)
    z, p, _, evals = maximize_in_consumption_space(qmap, z_lo, z_hi, box, budget, seed, n_starts, init)
    p = box.project(p)
    eq = solve_equilibrium(mkt, p)
    return OracleSolution(p, eq.x, float(p @ eq.x), evals, eq.route)


# -- closed forms -----------------------------------------------------------


def lq_closed_forms(kind: str, a: float, b: float, delta: float = 0.0, n: int = 1) -> OracleSolution:
    """Homogeneous linear-quadratic optimum on the null or complete network."""
    if kind == "null":
        scale = 1.0
    elif kind == "complete":
        k = delta * (n - 1)
        if k >= 1:
            raise StabilityError(f"delta (n-1) = {k:g} >= 1")
        scale = 1.0 / (1.0 - k)
    else:
        raise SpecError(f"unknown benchmark {kind!r}")
    p = a / (2 * b)
    x = a / 2 * scale
    return OracleSolution(np.full(n, p), np.full(n, x), n * p * x, 0, "closed_form")


def star_prices(kind: str, a, delta: float, n: Optional[int] = None) -> np.ndarray:
    """Optimal linear-quadratic prices (B = I) on the directed star networks.

    ``follower``: node 0 is influenced by every other node.
    ``influencer``: node 0 influences every other node.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        if n is None:
            raise DimensionError("scalar intercept needs n")
        a = np.full(n, float(a))
    n = a.size
    den = 4 - (n - 1) * delta**2
    if den <= 0:
        raise DegenerateError(f"(n-1) delta^2 = {(n - 1) * delta**2:g} >= 4")
    a1, rest = a[0], a[1:]
    big_a = rest.sum()
    p = np.empty(n)
    if kind == "follower":
        p[0] = (2 * a1 + delta * big_a) / den
        p[1:] = (rest - delta * p[0]) / 2
    elif kind == "influencer":
        p[0] = (2 * a1 - delta * big_a - (n - 1) * delta**2 * a1) / den
        p[1:] = (rest + delta * a1 - delta * p[0]) / 2
    else:
        raise SpecError(f"unknown star kind {kind!r}")
    return p


def _default_bracket(model: UtilityModel) -> tuple[float, float]:
    lo, hi = model.natural_domain
    lo = -1e6 if math.isinf(lo) else lo + 1e-12 * max(1.0, abs(lo))
    hi = 1e6 if math.isinf(hi) else hi - 1e-12 * max(1.0, abs(hi))
    return lo, hi


def nonlinear_symmetric_foc(kind: str, model: UtilityModel, a: float, b: float, delta: float = 0.0,
                            n: int = 1, bracket=None) -> tuple[float, float]:
    """Symmetric optimum (x*, p*) on the null or complete homogeneous network.

    ``bracket`` defaults to the natural domain; on the complete network the
    consumption box should usually be passed, since peer effects can make the
    pricing condition change sign again far outside it.
    """
    if kind == "null":
        k = 0.0
    elif kind == "complete":
        k = delta * (n - 1)
    else:
        raise SpecError(f"unknown benchmark {kind!r}")
    lo, hi = bracket or _default_bracket(model)

    def g(x):
        return a - model.phi(x) - x * model.phi_prime(x) + 2 * k * x

    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0 > g_hi or g_lo < 0 < g_hi):
        raise BracketError(f"no sign change of the pricing condition on [{lo}, {hi}]")
    x = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    p = (a - model.phi(x) + k * x) / b
    return float(x), float(p)


# -- influence ---------------------------------------------------------------


@dataclass
class IIVReport:
    v: np.ndarray
    exact_at: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "v": [float(t) for t in self.v],
            "exact_at": None if self.exact_at is None else [float(t) for t in self.exact_at],
        }


def iiv(mkt: Market) -> IIVReport:
    """Intrinsic influential values 1^T (D - delta G)^-1 (generalized Katz-Bonacich)."""
    net = mkt.net
    all_lq = all(m.kind == "lq" or (m.kind == "power" and m.gamma == 1.0) for m in mkt.models)
    if not all_lq:
        if not net.is_nonnegative():
            raise PreconditionError("nonlinear utilities need a nonnegative network for the IIV bound")
        if not mkt.conditions.contraction_holds:
            raise PreconditionError("IIV bound needs rho(delta D^-1 G) < 1")
    m = np.diag(mkt.mu) - net.dg
    v = np.linalg.solve(m.T, np.ones(mkt.n))
    xs = np.array([c.model.curvature_argmin(c.domain) for c in mkt.consumers])
    exact = xs if np.all((xs > mkt.lo) & (xs < mkt.hi)) else None
    return IIVReport(v, exact)


def influencer_lower_bound(mkt: Market, i: int, box: PriceBox) -> Optional[float]:
    """Lower bound on p_i* for an uninfluenced consumer i, or None when the
    sufficient condition V_i < phi_i^-1(a_i) / (p_bar b_i) fails."""
    net = mkt.net
    if np.any(net.g[i] != 0):
        raise StructureError(f"row {i} of G is not zero")
    if not net.is_nonnegative():
        raise PreconditionError("bound needs a nonnegative network")
    if not spectral_radius_nonneg(net.dg) < 1:
        raise PreconditionError("bound needs rho(delta G) < 1")
    v_i = iiv(mkt).v[i]
    c = mkt.consumers[i]
    p_bar = box.p_bar
    try:
        x_a = c.model.phi_inv(c.a)
    except RangeError:
        return None
    if not v_i < x_a / (p_bar * c.b):
        return None
    return float((c.a - c.model.phi(p_bar * c.b * v_i)) / c.b)


def influencer_price_residual(mkt: Market, p, x, i: int) -> float:
    """p_i - [a_i - phi_i(b_i sum_j [J^-1]_ji p_j)] / b_i at an interior optimum."""
    from .equilibrium import jacobian

    p = np.asarray(p, dtype=float)
    jinv = np.linalg.inv(jacobian(mkt, x))
    c = mkt.consumers[i]
    inner = c.b * float(jinv[:, i] @ p)
    return float(p[i] - (c.a - c.model.phi(inner)) / c.b)
