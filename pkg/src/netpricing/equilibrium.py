"""Consumer Nash equilibrium for posted prices.

The equilibrium solves phi(x) - a + B p - delta G x = 0 on the box X (as a
variational inequality when coordinates sit on the boundary). Two certified
routes are available: best-response iteration when rho(delta D^-1 |G|) < 1,
and projected forward steps when D - delta (G + G^T)/2 is positive definite.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConditionError,
    DegenerateError,
    DimensionError,
    MarginError,
    NoConvergence,
    SingularError,
)
from .network import ConditionReport, CurvatureProfile, Network, check_conditions, operator_norm
from .utility import ConsumerParams, UtilityModel

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
SINGULAR_COND = 1e12


class Market:
    """Network plus consumer primitives, with vectorized access to phi and friends."""

    def __init__(self, net: Network, consumers: Sequence[ConsumerParams]):
        consumers = list(consumers)
        if len(consumers) != net.n:
            raise DimensionError(f"{len(consumers)} consumers for a {net.n}-node network")
        self.net = net
        self.consumers = consumers
        self.a = np.array([c.a for c in consumers], dtype=float)
        self.b = np.array([c.b for c in consumers], dtype=float)
        self.lo = np.array([c.domain[0] for c in consumers], dtype=float)
        self.hi = np.array([c.domain[1] for c in consumers], dtype=float)
        self.d = CurvatureProfile([c.mu for c in consumers])
        groups: dict[UtilityModel, list[int]] = {}
        for i, c in enumerate(consumers):
            groups.setdefault(c.model, []).append(i)
        self._groups = [(m, np.array(ix)) for m, ix in groups.items()]

    @classmethod
    def homogeneous(cls, net: Network, model: UtilityModel, a, b, domain) -> "Market":
        """All consumers share ``model`` and ``domain``; ``a``/``b`` may be scalars or vectors."""
        a = np.broadcast_to(np.asarray(a, dtype=float), (net.n,))
        b = np.broadcast_to(np.asarray(b, dtype=float), (net.n,))
        return cls(net, [ConsumerParams(float(ai), float(bi), model, tuple(domain)) for ai, bi in zip(a, b)])

    @property
    def n(self) -> int:
        return self.net.n

    @property
    def mu(self) -> np.ndarray:
        return self.d.mu

    @property
    def models(self) -> list[UtilityModel]:
        return [m for m, _ in self._groups]

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @cached_property
    def conditions(self) -> ConditionReport:
        return check_conditions(self.net, self.d)

    def submarket(self, idx) -> "Market":
        idx = np.asarray(idx)
        return Market(self.net.subnetwork(idx), [self.consumers[i] for i in idx])

    def _apply(self, method: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"expected a length-{self.n} profile, got shape {x.shape}")
        out = np.empty(self.n)
        for model, ix in self._groups:
            out[ix] = getattr(model, method)(x[ix])
        return out

    def phi(self, x) -> np.ndarray:
        return self._apply("phi", x)

    def phi_raw(self, x) -> np.ndarray:
        return self._apply("_phi_raw", x)

    def phi_prime(self, x) -> np.ndarray:
        return self._apply("phi_prime", x)

    def psi(self, x) -> np.ndarray:
        """phi(x) - a."""
        return self.phi(x) - self.a

    def project_inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.empty(self.n)
        for model, ix in self._groups:
            out[ix] = model.project_inverse(z[ix], self.lo[ix], self.hi[ix])
        return out

    def project(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def curvature_sup(self) -> np.ndarray:
        return np.array([c.model.curvature_sup(c.domain) for c in self.consumers])


@dataclass
class EquilibriumResult:
    x: np.ndarray
    residual: float
    iterations: int
    route: str
    history: Optional[list] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations, "route": self.route}

    def to_csv(self, path, p) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "x_i", "p_i"])
            for i, (xi, pi) in enumerate(zip(self.x, np.asarray(p, dtype=float))):
                w.writerow([i, f"{xi:.17g}", f"{pi:.17g}"])


def _prices(mkt: Market, p) -> np.ndarray:
    p = np.broadcast_to(np.asarray(p, dtype=float), (mkt.n,)).astype(float)
    if not np.all(np.isfinite(p)):
        raise DimensionError("prices must be finite")
    return p


def best_response(mkt: Market, x, p) -> np.ndarray:
    """Joint best response: clip of phi^-1(a - B p + delta G x) to each interval."""
    x = np.asarray(x, dtype=float)
    p = _prices(mkt, p)
    if x.shape != (mkt.n,):
        raise DimensionError(f"expected a length-{mkt.n} profile, got shape {x.shape}")
    return mkt.project_inverse(mkt.a - mkt.b * p + mkt.net.dg @ x)


def foc_residual(mkt: Market, x, p, shift=None) -> float:
    """Complementarity residual of the stacked first-order conditions.

    Equals |phi_i(x_i) - s_i(x)| at interior coordinates and the one-sided
    violation at coordinates resting on a bound. ``shift`` is added to the
    marginal benefit s(x) (used for noisy observations).
    """
    x = np.asarray(x, dtype=float)
    s = mkt.a - mkt.b * _prices(mkt, p) + mkt.net.dg @ x
    if shift is not None:
        s = s + shift
    r = mkt.phi_raw(x) - s
    at_lo = x <= mkt.lo
    at_hi = x >= mkt.hi
    with np.errstate(invalid="ignore"):
        res = np.where(at_lo, np.maximum(0.0, -r), np.where(at_hi, np.maximum(0.0, r), np.abs(r)))
    res = np.where(np.isnan(res), math.inf, res)
    return float(np.max(res)) if res.size else 0.0


def solve_fixed_point(mkt: Market, p, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                      check: bool = True, shift=None, x0=None, keep_history: bool = False) -> EquilibriumResult:
    """Best-response iteration from the box midpoint.

    With ``check`` the contraction condition must hold; otherwise the iteration
    runs uncertified.
    """
    if check and not mkt.conditions.contraction_holds:
        raise ConditionError(f"contraction condition fails (rho={mkt.conditions.contraction_rho:.6g})")
    p = _prices(mkt, p)
    base = mkt.a - mkt.b * p if shift is None else mkt.a - mkt.b * p + shift
    dg = mkt.net.dg
    x = mkt.midpoint if x0 is None else np.asarray(x0, dtype=float)
    history = [x] if keep_history else None
    for k in range(1, max_iter + 1):
        x_new = mkt.project_inverse(base + dg @ x)
        step = float(np.max(np.abs(x_new - x)))
        x = x_new
        if keep_history:
            history.append(x)
        if step < tol:
            res = foc_residual(mkt, x, p, shift)
            if res <= tol or step == 0.0:
                return EquilibriumResult(x, res, k, "contraction", history)
    raise NoConvergence(f"best-response iteration did not converge in {max_iter} steps", x, max_iter)


def monotone_constants(mkt: Market) -> tuple[float, float]:
    """(m, L): strong-monotonicity margin and Lipschitz bound of the equilibrium operator."""
    m = mkt.conditions.variational_lambda_min
    lip = float(np.max(mkt.curvature_sup())) + mkt.net.delta * operator_norm(mkt.net.g)
    return m, lip


def solve_monotone(mkt: Market, p, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   shift=None, x0=None, keep_history: bool = False) -> EquilibriumResult:
    """Projected forward steps x <- clip(x - eta F(x)) with eta = m / L^2."""
    m, lip = monotone_constants(mkt)
    if not m > 0:
        raise MarginError(f"variational condition fails (lambda_min={m:.6g})")
    if not math.isfinite(lip):
        raise DegenerateError("curvature is unbounded on the feasible box; monotone route needs a finite bound")
    eta = m / lip**2
    p = _prices(mkt, p)
    c = mkt.b * p - mkt.a if shift is None else mkt.b * p - mkt.a - shift
    dg = mkt.net.dg
    x = mkt.midpoint if x0 is None else np.asarray(x0, dtype=float)
    history = [x] if keep_history else None
    for k in range(1, max_iter + 1):
        f = mkt.phi_raw(x) + c - dg @ x
        x_new = np.clip(x - eta * f, mkt.lo, mkt.hi)
        step = float(np.max(np.abs(x_new - x)))
        x = x_new
        if keep_history:
            history.append(x)
        # a forward step of size eta moves at most eta * residual
        if step <= eta * tol:
            res = foc_residual(mkt, x, p, shift)
            if res <= tol or step == 0.0:
                return EquilibriumResult(x, res, k, "monotone", history)
    raise NoConvergence(f"projected iteration did not converge in {max_iter} steps", x, max_iter)


def solve_equilibrium(mkt: Market, p, route: str = "auto", tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER, shift=None) -> EquilibriumResult:
    """Certified equilibrium: contraction route when it applies, else the monotone route."""
    rep = mkt.conditions
    if route == "contraction" or (route == "auto" and rep.contraction_holds):
        return solve_fixed_point(mkt, p, tol, max_iter, shift=shift)
    if route == "monotone" or (route == "auto" and rep.variational_holds):
        return solve_monotone(mkt, p, tol, max_iter, shift=shift)
    if route != "auto":
        raise ValueError(f"unknown route {route!r}")
    raise ConditionError(
        f"no uniqueness certificate: rho={rep.contraction_rho:.6g}, lambda_min={rep.variational_lambda_min:.6g}"
    )


def jacobian(mkt: Market, x) -> np.ndarray:
    """J(x) = diag(phi'(x)) - delta G."""
    return np.diag(mkt.phi_prime(x)) - mkt.net.dg


def price_map(mkt: Market, x) -> np.ndarray:
    """Prices that make ``x`` the interior equilibrium: B^-1 (a - phi(x) + delta G x)."""
    x = np.asarray(x, dtype=float)
    return (mkt.a - mkt.phi(x) + mkt.net.dg @ x) / mkt.b


def price_sensitivity(mkt: Market, x) -> np.ndarray:
    """d x* / d p = -J(x)^-1 B at an interior equilibrium ``x``."""
    j = jacobian(mkt, x)
    if np.linalg.cond(j) > SINGULAR_COND:
        raise SingularError("Jacobian is numerically singular")
    return -np.linalg.solve(j, np.diag(mkt.b))
