"""Weighted isotonic regression (pool adjacent violators) and its sup-norm rate check."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, EmptyInput
from .utility import UtilityModel


@dataclass(frozen=True, eq=False)
class IsotonicFit:
    knots: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if k.size == 0:
            raise EmptyInput("empty fit")
        if not (k.shape == v.shape == w.shape):
            raise DimensionError("knots, values and weights differ in length")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(np.diff(v) < 0):
            raise ValueError("values must be nondecreasing")
        for name, arr in (("knots", k), ("values", v), ("weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> float:
        return float(self.weights.sum())

    def __call__(self, x):
        return interpolate(self, x)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["knot", "value", "weight"])
            for k, v, o in zip(self.knots, self.values, self.weights):
                w.writerow([f"{k:.17g}", f"{v:.17g}", f"{o:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "IsotonicFit":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(*(np.array([float(r[c]) for r in rows]) for c in ("knot", "value", "weight")))


def _pool(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted PAVA on already sorted, tie-free data."""
    n = y.size
    means = np.empty(n)
    wts = np.empty(n)
    counts = np.empty(n, dtype=int)
    top = -1
    for i in range(n):
        top += 1
        means[top], wts[top], counts[top] = y[i], w[i], 1
        while top > 0 and means[top - 1] > means[top]:
            tw = wts[top - 1] + wts[top]
            means[top - 1] = (wts[top - 1] * means[top - 1] + wts[top] * means[top]) / tw
            wts[top - 1] = tw
            counts[top - 1] += counts[top]
            top -= 1
    return np.repeat(means[: top + 1], counts[: top + 1])


def pava(xs, ys, weights: Optional[Sequence[float]] = None) -> IsotonicFit:
    """Monotone least-squares fit of ``ys`` on ``xs``; exact covariate ties are
    collapsed to weighted means first."""
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size == 0:
        raise EmptyInput("pava needs at least one point")
    if xs.shape != ys.shape:
        raise DimensionError("xs and ys differ in length")
    w = np.ones_like(xs) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != xs.shape:
        raise DimensionError("weights differ in length")
    order = np.argsort(xs, kind="stable")
    xs, ys, w = xs[order], ys[order], w[order]
    knots, start = np.unique(xs, return_index=True)
    if knots.size == xs.size:
        return IsotonicFit(knots, _pool(ys, w), w)
    wsum = np.add.reduceat(w, start)
    ymean = np.add.reduceat(w * ys, start) / wsum
    return IsotonicFit(knots, _pool(ymean, wsum), wsum)


def interpolate(fit: IsotonicFit, x):
    """Piecewise-linear interpolant of the fit, clamped to the end values."""
    return np.interp(x, fit.knots, fit.values)


def generalized_inverse(fit: IsotonicFit, z, lo: float, hi: float):
    """Smallest x with interpolate(fit, x) >= z, clipped to [lo, hi]."""
    k, v = fit.knots, fit.values
    z = np.asarray(z, dtype=float)
    j = np.searchsorted(v, z, side="left")
    inner = (j > 0) & (j < v.size)
    jj = np.clip(j, 1, max(v.size - 1, 1))
    if v.size > 1:
        v0, v1 = v[jj - 1], v[jj]
        with np.errstate(invalid="ignore", divide="ignore"):
            x = k[jj - 1] + (z - v0) / (v1 - v0) * (k[jj] - k[jj - 1])
    else:
        x = np.full(z.shape, k[0])
    x = np.where(inner, x, np.where(j == 0, np.where(z > v[0], k[0], -math.inf), math.inf))
    return np.clip(x, lo, hi)


def rate_validator(model: UtilityModel, domain, n_grid: Sequence[int], noise_sigma: float, reps: int,
                   seed: int = 0, kappa: float = 1.0, alpha: Optional[float] = None,
                   eval_points: int = 2001) -> tuple[float, np.ndarray]:
    """Monte-Carlo slope of log sup-error against log(ln n / n).

    The sup error is taken over the domain shrunk by kappa * rho_n^(1/(2 alpha + 1))
    on each side. Returns ``(slope, mean_sup_errors)``; the expected slope is
    alpha / (2 alpha + 1).
    """
    if alpha is None:
        alpha = model.holder_exponent
        if alpha is None:
            raise ValueError(f"no Holder exponent known for {model.kind}")
    lo, hi = map(float, domain)
    width = hi - lo
    rhos, errs = [], []
    for k, n in enumerate(n_grid):
        rho = math.log(n) / n
        shrink = kappa * rho ** (1.0 / (2 * alpha + 1)) * width
        a, b = lo + shrink, hi - shrink
        if not a < b:
            raise ValueError(f"interior is empty at n={n}")
        grid = np.linspace(a, b, eval_points)
        sup = []
        for r in range(reps):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, r)))
            x = rng.uniform(lo, hi, n)
            y = model.phi(x) + noise_sigma * rng.standard_normal(n)
            fit = pava(x, y)
            inner = fit.knots[(fit.knots >= a) & (fit.knots <= b)]
            pts = np.concatenate([grid, inner])
            sup.append(float(np.max(np.abs(interpolate(fit, pts) - model.phi(pts)))))
        rhos.append(rho)
        errs.append(float(np.mean(sup)))
    slope = float(np.polyfit(np.log(rhos), np.log(errs), 1)[0])
    return slope, np.array(errs)
