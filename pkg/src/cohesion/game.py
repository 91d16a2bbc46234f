"""TU games, coalitions as bitmasks, and the geometry of the preimputation plane."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

EFFICIENCY_TOL = 1e-9
MAX_PLAYERS = 24


class GameError(ValueError):
    pass


# ---------------------------------------------------------------------------
# coalitions

def popcount(mask: int) -> int:
    return bin(mask).count("1")


def members(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def grand(n: int) -> int:
    return (1 << n) - 1


def complement(mask: int, n: int) -> int:
    return grand(n) ^ mask


def check_coalition(mask: int, n: int) -> int:
    mask = int(mask)
    if mask <= 0 or mask > grand(n):
        raise GameError(f"invalid coalition mask {mask} for n={n}")
    return mask


def default_names(n: int) -> tuple[str, ...]:
    if n <= 26:
        return tuple("abcdefghijklmnopqrstuvwxyz"[:n])
    return tuple(f"p{i + 1}" for i in range(n))


def coalition_label(mask: int, names: Sequence[str]) -> str:
    return "+".join(names[i] for i in members(mask))


def parse_coalition(label: str, names: Sequence[str]) -> int:
    index = {name: i for i, name in enumerate(names)}
    mask = 0
    for part in label.split("+"):
        part = part.strip()
        if part not in index:
            raise GameError(f"unknown player {part!r} in coalition {label!r}")
        bit = 1 << index[part]
        if mask & bit:
            raise GameError(f"player {part!r} repeated in coalition {label!r}")
        mask |= bit
    return mask


def indicator(mask: int, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[members(mask)] = 1.0
    return out


# ---------------------------------------------------------------------------
# games

@dataclass(frozen=True, eq=False)
class Game:
    """A TU game on players ``0..n-1``.

    ``values[mask - 1]`` holds v(S) for the coalition whose bitmask is
    ``mask``; bit i set means player i belongs to S.
    """

    n: int
    values: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = int(self.n)
        if not 2 <= n <= MAX_PLAYERS:
            raise GameError(f"player count must be in [2, {MAX_PLAYERS}], got {n}")
        if n > 16:
            log.warning("n=%d: coalition tables have %d entries", n, 2**n - 1)
        values = np.array(self.values, dtype=float)
        if values.shape != (2**n - 1,):
            raise GameError(f"expected {2**n - 1} coalition values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise GameError("coalition values must be finite")
        values.setflags(write=False)
        names = tuple(self.names) if self.names else default_names(n)
        if len(names) != n or len(set(names)) != n:
            raise GameError("player names must be n distinct labels")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    def v(self, mask: int) -> float:
        return float(self.values[mask - 1])

    @property
    def normalized(self) -> bool:
        return abs(self.values[-1]) <= 1e-12

    def __eq__(self, other):
        if not isinstance(other, Game):
            return NotImplemented
        return (self.n == other.n and self.names == other.names
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.n, self.names, self.values.tobytes()))

    def __repr__(self):
        return f"Game(n={self.n}, names={self.names!r})"

    # Cached dense tables over the proper coalitions (masks 1 .. 2^n - 2),
    # shared by the field evaluators and the integrators.
    @cached_property
    def proper_masks(self) -> np.ndarray:
        return np.arange(1, grand(self.n), dtype=np.int64)

    @cached_property
    def proper_indicators(self) -> np.ndarray:
        bits = (self.proper_masks[:, None] >> np.arange(self.n)) & 1
        out = bits.astype(float)
        out.setflags(write=False)
        return out

    @cached_property
    def proper_etas(self) -> np.ndarray:
        ind = self.proper_indicators
        out = ind - ind.sum(axis=1, keepdims=True) / self.n
        out.setflags(write=False)
        return out

    @cached_property
    def proper_values(self) -> np.ndarray:
        return self.values[:-1]

    def __getstate__(self):
        return {"n": self.n, "values": np.array(self.values), "names": self.names}

    def __setstate__(self, state):
        values = np.array(state["values"], dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "n", state["n"])
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(state["names"]))


def game_from_function(n: int, fn, names: Sequence[str] = ()) -> Game:
    """Build a game from ``fn(mask) -> v(S)``."""
    return Game(n, np.array([fn(m) for m in range(1, 2**n)], dtype=float), tuple(names))


def require_normalized(g: Game) -> None:
    if not g.normalized:
        raise GameError("game must be normalized (v(N) = 0); call normalize() first")


def normalize(g: Game) -> Game:
    """Shift v(S) by -(s/n) v(N) so the grand coalition is worth 0."""
    vN = g.values[-1]
    if vN == 0.0:
        return g
    sizes = np.array([popcount(m) for m in range(1, 2**g.n)], dtype=float)
    values = g.values - sizes / g.n * vN
    values[-1] = 0.0
    return Game(g.n, values, g.names)


# ---------------------------------------------------------------------------
# preimputations

def as_preimputation(x, n: int | None = None, tol: float = EFFICIENCY_TOL) -> np.ndarray:
    """Validate a payoff vector lying on the hyperplane x(N) = 0."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise GameError(f"preimputation must be a 1-d vector, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise GameError(f"dimension mismatch: expected {n} payoffs, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise GameError("preimputation has non-finite entries")
    total = float(x.sum())
    if abs(total) > tol:
        raise GameError(f"payoffs sum to {total:.3g}, not 0 (tolerance {tol:g})")
    return x


def project_to_X(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w - w.mean()


def eta(mask: int, n: int) -> np.ndarray:
    """Orthogonal projection of the indicator of S onto the plane x(N) = 0."""
    check_coalition(mask, n)
    out = indicator(mask, n) - popcount(mask) / n
    if mask == grand(n):
        out[:] = 0.0
    return out


def payment(mask: int, x) -> float:
    x = np.asarray(x, dtype=float)
    check_coalition(mask, x.shape[0])
    return float(x[members(mask)].sum())


def excess(g: Game, mask: int, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n,):
        raise GameError(f"dimension mismatch: expected {g.n} payoffs, got {x.shape}")
    return g.v(check_coalition(mask, g.n)) - payment(mask, x)


def excesses(g: Game, x) -> np.ndarray:
    """Excess of every proper coalition, ordered by mask."""
    return g.proper_values - g.proper_indicators @ np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# generators

def gen_symmetric(n: int, c: float) -> Game:
    """v(S) = c * s * (n - s); c = -3/2 with n = 3 is the worked example game."""
    if n < 2:
        raise GameError("n must be at least 2")
    return game_from_function(n, lambda m: c * popcount(m) * (n - popcount(m)))


def random_balanced_collection(n: int, rng: np.random.Generator) -> dict[int, float]:
    """A random balanced collection of proper coalitions with its weights."""
    if rng.random() < 0.5:
        # random partition into at least two blocks
        while True:
            labels = rng.integers(0, n, size=n)
            if len(set(labels.tolist())) >= 2:
                break
        blocks = {}
        for i, lab in enumerate(labels.tolist()):
            blocks[lab] = blocks.get(lab, 0) | (1 << i)
        return {m: 1.0 for m in blocks.values()}
    # all coalitions of one size k, each weighted 1 / C(n-1, k-1)
    k = int(rng.integers(1, n))
    from math import comb
    w = 1.0 / comb(n - 1, k - 1)
    return {m: w for m in range(1, grand(n)) if popcount(m) == k}


def gen_random(n: int, seed: int, balanced: bool = True, *, scale: float = 5.0,
               max_tries: int = 100) -> Game:
    """Seeded random normalized game with a known core status.

    Balanced games are built around a random core point y with v(S) = y(S) - slack.
    Unbalanced games additionally raise v on a balanced collection until the
    weighted sum of its worths exceeds v(N).
    """
    from .corelp import core_nonempty  # local import: corelp depends on this module

    if n < 2:
        raise GameError("n must be at least 2")
    rng = np.random.default_rng(seed)
    ind = np.array([indicator(m, n) for m in range(1, 2**n)])
    for _ in range(max_tries):
        y = project_to_X(rng.normal(0.0, scale, size=n))
        slack = rng.uniform(0.0, scale, size=2**n - 1)
        values = ind @ y - slack
        values[-1] = 0.0
        if not balanced:
            coll = random_balanced_collection(n, rng)
            deficit = sum(w * values[m - 1] for m, w in coll.items())
            target = rng.uniform(0.5, 2.0) * scale
            lam_total = sum(coll.values())
            for m in coll:
                values[m - 1] += (target - deficit) / lam_total
        g = Game(n, values)
        if core_nonempty(g) == balanced:
            return g
    raise GameError(f"could not generate a game with balanced={balanced} "
                    f"after {max_tries} tries (n={n}, seed={seed})")


def random_preimputations(n: int, count: int, radius: float, rng: np.random.Generator,
                          ) -> np.ndarray:
    """Uniform samples from the ball of given radius inside the plane x(N) = 0."""
    basis = plane_basis(n)
    d = n - 1
    z = rng.normal(size=(count, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / d)
    return (z * r[:, None]) @ basis.T


def plane_basis(n: int) -> np.ndarray:
    """Orthonormal basis of the plane x(N) = 0 as the columns of an (n, n-1) array."""
    q, _ = np.linalg.qr(np.eye(n)[:, :-1] - 1.0 / n)
    return q


def iter_proper(n: int) -> Iterable[int]:
    return range(1, grand(n))
