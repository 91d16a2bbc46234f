"""Dissatisfaction (scalar) and cohesion (vector) fields of a normalized game."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .game import Game, GameError, excesses, plane_basis, require_normalized


@dataclass(frozen=True)
class CoalitionCollection:
    """An ordered set of coalition masks with optional positive weights."""

    members: tuple[int, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        masks = tuple(int(m) for m in self.members)
        if len(set(masks)) != len(masks):
            raise GameError("duplicate coalitions in collection")
        if any(m <= 0 for m in masks):
            raise GameError("the empty coalition is not a coalition")
        object.__setattr__(self, "members", masks)
        if self.weights is not None:
            w = tuple(float(a) for a in self.weights)
            if len(w) != len(masks) or any(a <= 0 for a in w):
                raise GameError("weights must be positive, one per member")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, mask):
        return mask in self.members

    def key(self) -> frozenset[int]:
        return frozenset(self.members)


def aggrieved(g: Game, x) -> CoalitionCollection:
    """Coalitions with strictly positive excess at x, by ascending mask."""
    require_normalized(g)
    e = excesses(g, x)
    return CoalitionCollection(tuple(int(m) for m in g.proper_masks[e > 0]))


def dissatisfaction(g: Game, x) -> float:
    require_normalized(g)
    e = np.maximum(excesses(g, x), 0.0)
    return 0.5 * float(e @ e)


def cohesion(g: Game, x) -> np.ndarray:
    require_normalized(g)
    e = np.maximum(excesses(g, x), 0.0)
    return e @ g.proper_etas


def _weight_vector(g: Game, weights) -> np.ndarray:
    if isinstance(weights, Mapping):
        a = np.ones(len(g.proper_masks))
        for mask, w in weights.items():
            if not 0 < mask < 2**g.n - 1:
                raise GameError(f"weight given for non-proper coalition {mask}")
            a[mask - 1] = w
    else:
        a = np.asarray(weights, dtype=float)
        if a.shape != g.proper_masks.shape:
            raise GameError(f"expected {len(g.proper_masks)} weights, got {a.shape}")
    if np.any(a <= 0):
        raise GameError("coalition weights must be positive")
    return a


def weighted_cohesion(g: Game, weights, x) -> np.ndarray:
    """Cohesion field with each aggrieved term scaled by a positive coefficient.

    ``weights`` is either a mapping mask -> a_S (missing coalitions weigh 1)
    or an array with one entry per proper coalition.
    """
    require_normalized(g)
    a = _weight_vector(g, weights)
    e = np.maximum(excesses(g, x), 0.0)
    return (a * e) @ g.proper_etas


@dataclass(frozen=True, eq=False)
class RegionAffine:
    """phi(x) = -A x + b on the region whose aggrieved collection is ``collection``."""

    collection: CoalitionCollection
    A: np.ndarray
    b: np.ndarray
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def lipschitz(self) -> float:
        cached = self.__dict__.get("_lipschitz")
        if cached is None:
            with self._lock:
                cached = self.__dict__.get("_lipschitz")
                if cached is None:
                    cached = _spectral_norm_psd(self.A)
                    self.__dict__["_lipschitz"] = cached
        return cached

    def field(self, x) -> np.ndarray:
        return -self.A @ np.asarray(x, dtype=float) + self.b


def region_affine(g: Game, coll) -> RegionAffine:
    if not isinstance(coll, CoalitionCollection):
        coll = CoalitionCollection(tuple(coll))
    idx = np.array(coll.members, dtype=np.int64) - 1
    if np.any(idx >= len(g.proper_masks)):
        raise GameError("region collections contain proper coalitions only")
    E = g.proper_etas[idx]
    A = E.T @ E
    b = g.proper_values[idx] @ E
    return RegionAffine(coll, A, b)


def _spectral_norm_psd(A: np.ndarray, rtol: float = 1e-10) -> float:
    n = A.shape[0]
    if not np.any(A):
        return 0.0
    if n <= 8:
        return float(max(np.linalg.eigvalsh(A)[-1], 0.0))
    # power iteration; A is symmetric PSD so the Rayleigh quotient increases monotonically
    rng = np.random.default_rng(0)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(100_000):
        w = A @ v
        new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(new - lam) <= rtol * max(new, 1e-300):
            return new
        lam = new
    return lam


def region_lipschitz(r: RegionAffine) -> float:
    return r.lipschitz


def lie_derivative(g: Game, x) -> float:
    """Derivative of the dissatisfaction along the cohesion field: -|phi(x)|^2."""
    phi = cohesion(g, x)
    return -float(phi @ phi)


def fd_gradient(g: Game, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the dissatisfaction, taken inside the plane."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    basis = plane_basis(g.n)
    grad = np.zeros(g.n)
    for k in range(basis.shape[1]):
        u = basis[:, k]
        d = (dissatisfaction(g, x + h * u) - dissatisfaction(g, x - h * u)) / (2 * h)
        grad += d * u
    return grad


def same_region(g: Game, x, y) -> bool:
    return aggrieved(g, x).key() == aggrieved(g, y).key()
