"""Convex regularizers h, their marginal maps phi = h', and curvature floors.

Six families are supported (the Power family counts once):

========================  =====================================  =============
kind                      h(x)                                   natural domain
========================  =====================================  =============
``lq``                    x^2 / 2                                R
``power``                 x^(g+1) / (g+1), g in (0, 1]           [0, inf)
``discrete_choice``       x ln x + (1-x) ln(1-x)                 [0, 1]
``stone_geary``           -beta ln(x - g)                        (g, inf)
``exponential``           exp(g x) - 1                           [0, inf)
``isoelastic``            -(x^(1-g) - 1)/(1-g), or -ln x at g=1  (0, inf)
========================  =====================================  =============

All maps accept scalars or numpy arrays and return the same shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import BoundaryError, DegenerateError, DomainError, RangeError, SpecError

KINDS = ("lq", "power", "discrete_choice", "stone_geary", "exponential", "isoelastic")

_ALIASES = {
    "linear_quadratic": "lq",
    "linearquadratic": "lq",
    "quadratic": "lq",
    "logit": "discrete_choice",
    "logistic": "discrete_choice",
    "discretechoice": "discrete_choice",
    "stonegeary": "stone_geary",
    "exp": "exponential",
    "box_cox": "isoelastic",
}

BISECT_TOL = 1e-12
BISECT_MAX_ITER = 200


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class UtilityModel:
    kind: str
    gamma: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in KINDS:
            raise SpecError(f"unknown utility kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        g = self.gamma
        if kind == "power":
            if g is None or not 0.0 < g <= 1.0:
                raise SpecError("power utility needs gamma in (0, 1]")
        elif kind == "stone_geary":
            if self.beta is None or self.beta <= 0:
                raise SpecError("stone_geary utility needs beta > 0")
            if g is None or g < 0:
                raise SpecError("stone_geary utility needs gamma >= 0")
        elif kind == "exponential":
            if g is None or g <= 0:
                raise SpecError("exponential utility needs gamma > 0")
        elif kind == "isoelastic":
            if g is None or not 0.0 <= g <= 1.0:
                raise SpecError("isoelastic utility needs gamma in [0, 1]")
        elif g is not None or self.beta is not None:
            raise SpecError(f"{kind} utility takes no parameters")

    # -- constructors / serialization ---------------------------------------

    @classmethod
    def lq(cls) -> "UtilityModel":
        return cls("lq")

    @classmethod
    def power(cls, gamma: float) -> "UtilityModel":
        return cls("power", gamma=gamma)

    @classmethod
    def discrete_choice(cls) -> "UtilityModel":
        return cls("discrete_choice")

    @classmethod
    def stone_geary(cls, beta: float, gamma: float) -> "UtilityModel":
        return cls("stone_geary", gamma=gamma, beta=beta)

    @classmethod
    def exponential(cls, gamma: float) -> "UtilityModel":
        return cls("exponential", gamma=gamma)

    @classmethod
    def isoelastic(cls, gamma: float) -> "UtilityModel":
        return cls("isoelastic", gamma=gamma)

    @classmethod
    def from_dict(cls, d: dict) -> "UtilityModel":
        if not isinstance(d, dict) or "kind" not in d:
            raise SpecError(f"utility descriptor must be an object with 'kind': {d!r}")
        extra = set(d) - {"kind", "gamma", "beta"}
        if extra:
            raise SpecError(f"unknown utility fields {sorted(extra)}")
        return cls(d["kind"], gamma=d.get("gamma"), beta=d.get("beta"))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        if self.beta is not None:
            d["beta"] = self.beta
        return d

    def __str__(self):
        if self.kind == "power":
            return f"power(gamma={self.gamma:g})"
        if self.kind == "stone_geary":
            return f"stone_geary(beta={self.beta:g}, gamma={self.gamma:g})"
        if self.gamma is not None:
            return f"{self.kind}(gamma={self.gamma:g})"
        return self.kind

    # -- domain bookkeeping -------------------------------------------------

    @property
    def natural_domain(self) -> tuple[float, float]:
        """Closure of the natural domain."""
        return {
            "lq": (-math.inf, math.inf),
            "power": (0.0, math.inf),
            "discrete_choice": (0.0, 1.0),
            "stone_geary": (self.gamma, math.inf),
            "exponential": (0.0, math.inf),
            "isoelastic": (0.0, math.inf),
        }[self.kind]

    @property
    def holder_exponent(self) -> Optional[float]:
        """Hoelder exponent of phi on compact domains, where one exists globally."""
        if self.kind == "lq":
            return 1.0
        if self.kind == "power":
            return self.gamma
        return None

    def _check_phi_domain(self, x):
        lo, hi = self.natural_domain
        if np.any(np.isnan(x)) or np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"{self}: consumption outside natural domain [{lo}, {hi}]")
        if self.kind == "discrete_choice" and np.any((x == 0.0) | (x == 1.0)):
            raise BoundaryError("discrete_choice: phi diverges at 0 and 1")
        if self.kind in ("stone_geary", "isoelastic") and np.any(x == lo):
            raise DomainError(f"{self}: phi is singular at {lo}")

    def _check_curvature_domain(self, x):
        self._check_phi_domain(x)
        if self.kind == "power" and self.gamma < 1 and np.any(x == 0.0):
            raise BoundaryError("power: curvature diverges at 0")

    # -- maps -------------------------------------------------------------

    def h(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind != "discrete_choice":
            self._check_phi_domain(x)
        g = self.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "lq":
                out = 0.5 * x * x
            elif self.kind == "power":
                out = x ** (g + 1) / (g + 1)
            elif self.kind == "discrete_choice":
                if np.any((x < 0) | (x > 1)):
                    raise DomainError("discrete_choice: consumption outside [0, 1]")
                out = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0) + np.where(
                    x < 1, (1 - x) * np.log(np.where(x < 1, 1 - x, 1.0)), 0.0
                )
            elif self.kind == "stone_geary":
                out = -self.beta * np.log(x - g)
            elif self.kind == "exponential":
                out = np.expm1(g * x)
            elif g == 1.0:
                out = -np.log(x)
            else:
                out = -(x ** (1 - g) - 1) / (1 - g)
        return _out(out, x)

    def _phi_raw(self, x):
        # no domain checks; singular endpoints map to +-inf
        g = self.gamma
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind == "lq":
                return x
            if self.kind == "power":
                return np.power(x, g)
            if self.kind == "discrete_choice":
                return np.log(x) - np.log1p(-x)
            if self.kind == "stone_geary":
                return -self.beta / (x - g)
            if self.kind == "exponential":
                return g * np.exp(g * x)
            return -np.power(x, -g)

    def phi(self, x):
        """Marginal cost h'(x)."""
        x = np.asarray(x, dtype=float)
        self._check_phi_domain(x)
        return _out(self._phi_raw(x), x)

    def phi_prime(self, x):
        """Curvature h''(x); strictly positive on the domain interior."""
        x = np.asarray(x, dtype=float)
        self._check_curvature_domain(x)
        g = self.gamma
        if self.kind == "lq":
            out = np.ones_like(x)
        elif self.kind == "power":
            out = g * np.power(x, g - 1)
        elif self.kind == "discrete_choice":
            out = 1.0 / (x * (1 - x))
        elif self.kind == "stone_geary":
            out = self.beta / (x - g) ** 2
        elif self.kind == "exponential":
            out = g * g * np.exp(g * x)
        else:
            out = g * np.power(x, -g - 1)
        return _out(out, x)

    @property
    def phi_range(self) -> tuple[float, float]:
        """Closure of phi's range over the natural domain."""
        g = self.gamma
        return {
            "lq": (-math.inf, math.inf),
            "power": (0.0, math.inf),
            "discrete_choice": (-math.inf, math.inf),
            "stone_geary": (-math.inf, 0.0),
            "exponential": (g, math.inf),
            "isoelastic": (-math.inf, 0.0),
        }[self.kind]

    def _in_range(self, z):
        lo, hi = self.phi_range
        ok = (z > lo) & (z < hi)
        if self.kind in ("power", "exponential"):
            ok |= z == lo
        return ok

    def _phi_inv_raw(self, z):
        g = self.gamma
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind == "lq":
                return z
            if self.kind == "power":
                return np.power(z, 1.0 / g)
            if self.kind == "discrete_choice":
                return expit(z)
            if self.kind == "stone_geary":
                return g - self.beta / z
            if self.kind == "exponential":
                return np.log(z / g) / g
            return np.power(-z, -1.0 / g)

    def phi_inv(self, z):
        """Inverse of phi; closed form for every family."""
        z = np.asarray(z, dtype=float)
        if self.kind == "isoelastic" and self.gamma == 0.0:
            raise RangeError("isoelastic(gamma=0) has constant phi; not invertible")
        if np.any(np.isnan(z)) or not np.all(self._in_range(z)):
            raise RangeError(f"{self}: value outside the range {self.phi_range} of phi")
        return _out(self._phi_inv_raw(z), z)

    def project_inverse(self, z, lo, hi):
        """Maximizer of z*x - h(x) over [lo, hi], i.e. clip(phi^-1(z)).

        Values of z beyond phi's range over [lo, hi] map to the matching endpoint.
        """
        z, lo, hi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (z, lo, hi)))
        phi_lo = self._phi_raw(lo)
        phi_hi = self._phi_raw(hi)
        below = z <= phi_lo
        above = z >= phi_hi
        inner = ~(below | above)
        x = np.where(below, lo, hi).astype(float)
        if np.any(inner):
            x[inner] = np.clip(self._phi_inv_raw(z[inner]), lo[inner], hi[inner])
        return _out(x, z)

    # -- curvature over a compact interval -------------------------------

    def _check_interval(self, lo, hi):
        nlo, nhi = self.natural_domain
        if not lo < hi:
            raise DomainError(f"empty domain [{lo}, {hi}]")
        if lo < nlo or hi > nhi:
            raise DomainError(f"{self}: domain [{lo}, {hi}] leaves natural domain [{nlo}, {nhi}]")
        if self.kind in ("stone_geary", "isoelastic") and lo <= nlo:
            raise DomainError(f"{self}: domain must start strictly above {nlo}")

    def mu_floor(self, domain) -> float:
        """Infimum of h'' over the closed interval ``domain``."""
        lo, hi = map(float, domain)
        self._check_interval(lo, hi)
        g = self.gamma
        k = self.kind
        if k == "lq" or (k == "power" and g == 1.0):
            return 1.0
        if k == "discrete_choice":
            x = min(max(0.5, lo), hi)
            return 1.0 / (x * (1 - x))
        if k == "exponential":
            return g * g * math.exp(g * lo)
        if k == "isoelastic" and g == 0.0:
            raise DegenerateError("isoelastic(gamma=0) is not strictly convex")
        # power (g<1), stone_geary, isoelastic: h'' decreasing, floor at hi
        if math.isinf(hi):
            raise DegenerateError(f"{self}: curvature floor is 0 on an unbounded domain")
        return float(self.phi_prime(hi))

    def curvature_argmin(self, domain) -> float:
        """A point of ``domain`` where h'' attains its floor."""
        lo, hi = map(float, domain)
        self._check_interval(lo, hi)
        k = self.kind
        if k == "lq" or (k == "power" and self.gamma == 1.0):
            return 0.5 * (lo + hi) if math.isfinite(lo + hi) else 0.0
        if k == "discrete_choice":
            return min(max(0.5, lo), hi)
        if k == "exponential":
            return lo
        return hi

    def curvature_sup(self, domain) -> float:
        """Supremum of h'' over ``domain`` (may be inf at singular endpoints)."""
        lo, hi = map(float, domain)
        self._check_interval(lo, hi)
        g = self.gamma
        k = self.kind
        if k == "lq" or (k == "power" and g == 1.0):
            return 1.0
        if k == "discrete_choice":
            x = lo if abs(lo - 0.5) >= abs(hi - 0.5) else hi
            return math.inf if x in (0.0, 1.0) else 1.0 / (x * (1 - x))
        if k == "exponential":
            return math.inf if math.isinf(hi) else g * g * math.exp(g * hi)
        if k == "power" and lo == 0.0:
            return math.inf
        if k == "isoelastic" and g == 0.0:
            return 0.0
        return float(self.phi_prime(lo))


def bisect_inverse(model: UtilityModel, z: float, lo: float, hi: float,
                   tol: float = BISECT_TOL, max_iter: int = BISECT_MAX_ITER) -> float:
    """Solve phi(x) = z on [lo, hi] by bisection (fallback / cross-check)."""
    f_lo = model._phi_raw(np.float64(lo)) - z
    f_hi = model._phi_raw(np.float64(hi)) - z
    if f_lo > 0 or f_hi < 0:
        raise RangeError(f"{z} not attained by phi on [{lo}, {hi}]")
    a, b = lo, hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        f = model._phi_raw(np.float64(mid)) - z
        if abs(f) <= tol:
            return float(mid)
        if f < 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def phi(model: UtilityModel, x):
    return model.phi(x)


def phi_inv(model: UtilityModel, z):
    return model.phi_inv(z)


def phi_prime(model: UtilityModel, x):
    return model.phi_prime(x)


def mu_floor(model: UtilityModel, domain) -> float:
    return model.mu_floor(domain)


@dataclass(frozen=True)
class ConsumerParams:
    """Primitives of one consumer: baseline utility a, price sensitivity b > 0,
    utility family and feasible interval."""

    a: float
    b: float
    model: UtilityModel
    domain: tuple[float, float]

    def __post_init__(self):
        if not self.b > 0:
            raise SpecError(f"price sensitivity must be positive, got {self.b}")
        lo, hi = map(float, self.domain)
        object.__setattr__(self, "domain", (lo, hi))
        self.model._check_interval(lo, hi)

    @property
    def mu(self) -> float:
        return self.model.mu_floor(self.domain)
