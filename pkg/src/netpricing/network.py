"""Signed directed networks, uniqueness-condition checks and topology builders."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DimensionError, ShapeError, SpecError, SpectralError

POWER_TOL = 1e-12
POWER_MAX_ITER = 10_000
DENSE_FALLBACK_N = 200


@dataclass(frozen=True, eq=False)
class Network:
    """Interaction matrix ``g`` (g[i, j] = effect of j on i) and intensity ``delta``."""

    g: np.ndarray
    delta: float = 1.0

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DimensionError(f"interaction matrix must be square, got shape {g.shape}")
        if np.any(np.diag(g) != 0):
            raise ShapeError("interaction matrix must have zero diagonal")
        if not np.all(np.isfinite(g)):
            raise ShapeError("interaction matrix has non-finite entries")
        if not self.delta >= 0:
            raise SpecError(f"spillover intensity must be >= 0, got {self.delta}")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def dg(self) -> np.ndarray:
        """delta * G."""
        return self.delta * self.g

    def with_delta(self, delta: float) -> "Network":
        return Network(self.g, delta)

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.g >= 0))

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.g, self.g.T))

    def subnetwork(self, idx) -> "Network":
        idx = np.asarray(idx)
        return Network(self.g[np.ix_(idx, idx)], self.delta)

    # -- serialization ------------------------------------------------------

    def entries(self) -> list[list]:
        rows, cols = np.nonzero(self.g)
        return [[int(i), int(j), float(self.g[i, j])] for i, j in zip(rows, cols)]

    def to_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta, "entries": self.entries()}

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        try:
            n = int(d["n"])
            g = np.zeros((n, n))
            for i, j, v in d.get("entries", []):
                g[int(i), int(j)] = float(v)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SpecError(f"malformed network object: {exc}") from exc
        return cls(g, float(d.get("delta", 1.0)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "value"])
            for i, j, v in self.entries():
                w.writerow([i, j, f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path, n: Optional[int] = None, delta: float = 1.0) -> "Network":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append((int(rec["i"]), int(rec["j"]), float(rec["value"])))
        size = n if n is not None else 1 + max((max(i, j) for i, j, _ in rows), default=-1)
        g = np.zeros((size, size))
        for i, j, v in rows:
            g[i, j] = v
        return cls(g, delta)


@dataclass(frozen=True, eq=False)
class CurvatureProfile:
    """Diagonal of D: per-consumer strong-convexity constants."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).ravel()
        if mu.size == 0 or not np.all(mu > 0):
            raise SpecError("curvature constants must be strictly positive")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def identity(cls, n: int) -> "CurvatureProfile":
        return cls(np.ones(n))


def _mu(d, n: int) -> np.ndarray:
    mu = d.mu if isinstance(d, CurvatureProfile) else CurvatureProfile(d).mu
    if mu.size != n:
        raise DimensionError(f"curvature profile has {mu.size} entries, network has {n} nodes")
    return mu


# -- spectral helpers -------------------------------------------------------


def power_iteration(m, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER):
    """Perron root of a nonnegative matrix.

    Returns ``(rho, converged, iterations)``. Estimates are ``||M x||`` for unit
    ``x``; convergence is declared when successive estimates differ by less than
    ``tol`` relative.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    x = np.full(n, 1.0 / math.sqrt(n))
    prev = math.inf
    for k in range(1, max_iter + 1):
        y = m @ x
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0, True, k
        if abs(lam - prev) <= tol * lam:
            return lam, True, k
        prev = lam
        x = y / lam
    return prev, False, max_iter


def spectral_radius_nonneg(m) -> float:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    rho, ok, _ = power_iteration(m)
    if ok:
        return rho
    if m.shape[0] < DENSE_FALLBACK_N:
        return float(np.max(np.abs(np.linalg.eigvals(m))))
    # periodic matrices: I + M is primitive on each irreducible class
    rho, _, _ = power_iteration(m + np.eye(m.shape[0]), max_iter=10 * POWER_MAX_ITER)
    return rho - 1.0


def operator_norm(g) -> float:
    """Spectral norm ||G||_2 via power iteration on G^T G."""
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return 0.0
    rho, ok, _ = power_iteration(g.T @ g)
    if not ok:
        return float(np.linalg.norm(g, 2))
    return math.sqrt(rho)


# -- uniqueness conditions --------------------------------------------------


@dataclass
class ConditionReport:
    contraction_rho: float
    contraction_holds: bool
    variational_lambda_min: float
    variational_holds: bool
    gershgorin_contraction: np.ndarray = field(repr=False)
    gershgorin_variational: np.ndarray = field(repr=False)

    @property
    def any_holds(self) -> bool:
        return self.contraction_holds or self.variational_holds

    def to_dict(self) -> dict:
        return {
            "contraction_rho": self.contraction_rho,
            "contraction_holds": self.contraction_holds,
            "variational_lambda_min": self.variational_lambda_min,
            "variational_holds": self.variational_holds,
            "gershgorin_contraction": [bool(f) for f in self.gershgorin_contraction],
            "gershgorin_variational": [bool(f) for f in self.gershgorin_variational],
        }


def contraction_matrix(net: Network, d) -> np.ndarray:
    mu = _mu(d, net.n)
    return net.delta * np.abs(net.g) / mu[:, None]


def variational_matrix(net: Network, d) -> np.ndarray:
    mu = _mu(d, net.n)
    return np.diag(mu) - net.delta * 0.5 * (net.g + net.g.T)


def check_conditions(net: Network, d) -> ConditionReport:
    """Evaluate both uniqueness conditions and their row-wise Gershgorin proxies."""
    mu = _mu(d, net.n)
    absg = np.abs(net.g)
    rho = spectral_radius_nonneg(contraction_matrix(net, mu))
    lam = float(np.linalg.eigvalsh(variational_matrix(net, mu))[0])
    gc = mu > net.delta * absg.sum(axis=1)
    gv = mu > net.delta * np.abs(0.5 * (net.g + net.g.T)).sum(axis=1)
    return ConditionReport(rho, rho < 1.0, lam, lam > 0.0, gc, gv)


def contraction_threshold(g, d) -> float:
    """Largest delta keeping rho(delta D^-1 |G|) < 1 (inf without interaction)."""
    g = np.asarray(g, dtype=float)
    rho = spectral_radius_nonneg(np.abs(g) / _mu(d, g.shape[0])[:, None])
    return math.inf if rho == 0 else 1.0 / rho


def variational_threshold(g, d) -> float:
    """Largest delta keeping D - delta (G + G^T)/2 positive definite."""
    g = np.asarray(g, dtype=float)
    s = np.sqrt(1.0 / _mu(d, g.shape[0]))
    lam = float(np.linalg.eigvalsh(s[:, None] * 0.5 * (g + g.T) * s[None, :])[-1])
    return math.inf if lam <= 0 else 1.0 / lam


def symmetric_nonneg_threshold(net: Network, d) -> float:
    """Common critical delta of both conditions for symmetric nonnegative G."""
    g = net.g
    if not net.is_symmetric():
        raise ShapeError("threshold requires a symmetric interaction matrix")
    if not net.is_nonnegative():
        raise ShapeError("threshold requires entry-wise nonnegative interactions")
    mu = _mu(d, net.n)
    s = 1.0 / np.sqrt(mu)
    rho = float(np.linalg.eigvalsh(s[:, None] * g * s[None, :])[-1]) if net.n else 0.0
    return math.inf if rho <= 0 else 1.0 / rho


def weighted_norm_weights(m, alpha: float) -> np.ndarray:
    """w = (alpha I - M)^-1 1, the weights of a sup norm in which M contracts by alpha."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ShapeError("weights are defined for nonnegative matrices")
    rho = spectral_radius_nonneg(m)
    if not rho < alpha < 1:
        raise SpectralError(f"need rho(M)={rho:.6g} < alpha={alpha} < 1")
    return np.linalg.solve(alpha * np.eye(m.shape[0]) - m, np.ones(m.shape[0]))


def communities(net: Network) -> list[np.ndarray]:
    """Connected components of the undirected support of G, ordered by first node."""
    support = (np.abs(net.g) + np.abs(net.g.T)) > 0
    k, labels = connected_components(support, directed=False)
    comps = [np.flatnonzero(labels == c) for c in range(k)]
    return sorted(comps, key=lambda c: c[0])


# -- topology builders ------------------------------------------------------


def _circular(n: int, w: float, flip: float, rng: np.random.Generator) -> np.ndarray:
    if n < 3:
        raise SpecError("circular network needs n >= 3")
    g = np.zeros((n, n))
    idx = np.arange(n)
    g[idx, (idx + 1) % n] = w
    g[idx, (idx + 2) % n] = w / 2
    if flip:
        if not 0 <= flip <= 1:
            raise SpecError("flip fraction must lie in [0, 1]")
        rows, cols = np.nonzero(g)
        k = int(math.floor(flip * rows.size))
        pick = rng.choice(rows.size, size=k, replace=False)
        g[rows[pick], cols[pick]] *= -1
    return g


def _star(n: int, follower: bool) -> np.ndarray:
    if n < 2:
        raise SpecError("star network needs n >= 2")
    g = np.zeros((n, n))
    if follower:
        g[0, 1:] = 1.0
    else:
        g[1:, 0] = 1.0
    return g


def _build_matrix(desc: dict, rng: np.random.Generator) -> np.ndarray:
    if not isinstance(desc, dict) or "kind" not in desc:
        raise SpecError(f"topology descriptor must be an object with 'kind': {desc!r}")
    kind = desc["kind"]
    try:
        if kind == "block_diag":
            blocks = [_build_matrix(b, rng) for b in desc["blocks"]]
            n = sum(b.shape[0] for b in blocks)
            g = np.zeros((n, n))
            off = 0
            for b in blocks:
                k = b.shape[0]
                g[off:off + k, off:off + k] = b
                off += k
            return g
        if kind == "dense":
            return np.array(desc["g"], dtype=float)
        if kind == "entries":
            return Network.from_dict({"n": desc["n"], "entries": desc["entries"]}).g.copy()
        n = int(desc["n"])
        if n < 1:
            raise SpecError("n must be positive")
        if kind == "null":
            return np.zeros((n, n))
        if kind == "complete":
            return float(desc.get("weight", 1.0)) * (np.ones((n, n)) - np.eye(n))
        if kind == "circular":
            return _circular(n, float(desc.get("w", 0.08)), float(desc.get("flip", 0.1)), rng)
        if kind == "influencer":
            base = desc.get("base", "circular")
            if base == "circular":
                g = _circular(n, float(desc.get("w", 0.08)), float(desc.get("flip", 0.0)), rng)
            elif base == "null":
                g = np.zeros((n, n))
            else:
                raise SpecError(f"unknown influencer base {base!r}")
            g[0, :] = 0.0
            g[1:, 0] = float(desc.get("weight", 0.5))
            return g
        if kind == "star_follower":
            return _star(n, follower=True)
        if kind == "star_influencer":
            return _star(n, follower=False)
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed {kind!r} descriptor: {exc}") from exc
    raise SpecError(f"unknown topology kind {kind!r}")


def build_topology(desc: dict, seed: Optional[int] = None) -> Network:
    """Build a benchmark network from a descriptor such as
    ``{"kind": "circular", "n": 20, "w": 0.08, "flip": 0.1, "delta": 0.5}``.

    Sign flips draw from ``seed`` (falling back to the descriptor's ``seed``, then 0).
    """
    if seed is None:
        seed = desc.get("seed", 0) if isinstance(desc, dict) else 0
    rng = np.random.default_rng(seed)
    g = _build_matrix(desc, rng)
    return Network(g, float(desc.get("delta", 1.0)))


def block_diag_network(blocks: Sequence[np.ndarray], delta: float) -> Network:
    n = sum(len(b) for b in blocks)
    g = np.zeros((n, n))
    off = 0
    for b in blocks:
        b = np.asarray(b, dtype=float)
        g[off:off + len(b), off:off + len(b)] = b
        off += len(b)
    return Network(g, delta)


def load_network(path, delta: Optional[float] = None) -> Network:
    """Read a network from ``.json`` ({n, delta, entries}) or ``.csv`` (i,j,value)."""
    path = Path(path)
    if path.suffix == ".csv":
        return Network.from_csv(path, delta=1.0 if delta is None else delta)
    net = Network.from_dict(json.loads(path.read_text()))
    return net if delta is None else net.with_delta(delta)
