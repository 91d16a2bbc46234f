"""Domination and outvoting between preimputations, and their link to theta."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import aggrieved, dissatisfaction
from .game import (Game, GameError, check_coalition, grand, members, random_preimputations,
                   require_normalized)
from .simplex import linprog

EXTERNAL_SLACK = 1e-12


@dataclass(frozen=True)
class OutvoteWitness:
    via: int
    strict_gains: tuple[float, ...]  # x_i - y_i for i in via, ascending player index
    external_ok: tuple[int, ...]  # every T not contained in via, all satisfied


def _payments(g: Game, x) -> np.ndarray:
    """x(T) for every coalition T, grand coalition included, indexed by mask - 1."""
    P = np.vstack([g.proper_indicators, np.ones(g.n)])
    return P @ np.asarray(x, dtype=float)


def dominates(g: Game, x, y, S: int) -> bool:
    """x dominates y via S: e_S(x) >= 0 and x_i > y_i for all i in S (exact comparisons)."""
    require_normalized(g)
    S = check_coalition(S, g.n)
    if S == grand(g.n):
        raise GameError("domination is defined via proper coalitions only")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = members(S)
    if g.v(S) - float(x[idx].sum()) < 0.0:
        return False
    return bool(np.all(x[idx] > y[idx]))


def _externals_ok(g: Game, x, S: int, pay=None) -> tuple[bool, np.ndarray]:
    masks = np.arange(1, grand(g.n) + 1)
    ext = masks[(masks & ~S) != 0]
    pay = _payments(g, x) if pay is None else pay
    ok = pay[ext - 1] >= g.values[ext - 1] - EXTERNAL_SLACK
    return bool(ok.all()), ext


def outvotes(g: Game, x, y, check_external: bool = True) -> OutvoteWitness | None:
    """First coalition (ascending mask) through which x outvotes y, or None.

    ``check_external=False`` drops the condition on coalitions not contained
    in S, leaving plain domination; it exists only as a negative control.
    """
    require_normalized(g)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pay = _payments(g, x)
    for S in range(1, grand(g.n)):
        if not dominates(g, x, y, S):
            continue
        ext = ()
        if check_external:
            ok, ext_masks = _externals_ok(g, x, S, pay)
            if not ok:
                continue
            ext = tuple(int(m) for m in ext_masks)
        idx = members(S)
        return OutvoteWitness(S, tuple(float(d) for d in x[idx] - y[idx]), ext)
    return None


def _repair(g: Game, xS: np.ndarray, S: int) -> np.ndarray | None:
    """Payoffs outside S meeting x(T) >= v(T) for every T not inside S, or None.

    Maximizes the smallest slack; the sum outside S is fixed by x(N) = 0.
    """
    n = g.n
    out = [i for i in range(n) if not S >> i & 1]
    k = len(out)
    masks = np.arange(1, grand(n) + 1)
    ext = masks[(masks & ~S) != 0]
    ind = ((ext[:, None] >> np.arange(n)) & 1).astype(float)
    inside = ind[:, [i for i in range(n) if S >> i & 1]] @ xS
    rhs = g.values[ext - 1] - inside
    # variables: z (free, one per outsider), t (free, capped at 1); maximize t
    A_ub = np.hstack([-ind[:, out], np.ones((len(ext), 1))])
    A_ub = np.vstack([A_ub, np.append(np.zeros(k), 1.0)])
    b_ub = np.append(-rhs, 1.0)
    A_eq = np.append(np.ones(k), 0.0)[None, :]
    c = np.append(np.zeros(k), -1.0)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[-xS.sum()],
                  free=np.ones(k + 1, dtype=bool))
    if not res.feasible or res.primal[-1] < 0.0:
        return None
    return res.primal[:k]


def _outside_aggrieved(g: Game, x, via: int) -> list[tuple[int, float]]:
    """Aggrieved coalitions at x not contained in ``via``, beyond the external slack."""
    e = g.proper_values - g.proper_indicators @ x
    return [(int(T), float(e[T - 1])) for T in g.proper_masks
            if T & ~via and e[T - 1] > EXTERNAL_SLACK]


@dataclass
class CompatReport:
    trials: int
    check_external: bool
    pairs: int = 0
    violations: int = 0
    subset_failures: int = 0  # aggrieved(x) not inside the witness coalition
    first_violation: tuple | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.subset_failures == 0


def check_theta_compat(g: Game, trials: int, seed: int, check_external: bool = True,
                       radius: float | None = None) -> CompatReport:
    """Randomized search for outvoting pairs and a check that theta(x) <= theta(y).

    Each trial samples an off-core y, picks an aggrieved S, raises every
    member of S by a positive amount while keeping e_S(x) >= 0, and fills in
    the outsiders. With ``check_external`` the outsiders are chosen by an LP
    so that every coalition not inside S is satisfied; without it they simply
    pay for the gains of S (negative control).
    """
    require_normalized(g)
    rng = np.random.default_rng(seed)
    rep = CompatReport(trials, check_external)
    if radius is None:
        radius = 2.0 * (1.0 + float(np.abs(g.values).max()))
    for _ in range(trials):
        y = random_preimputations(g.n, 1, radius, rng)[0]
        agg = aggrieved(g, y).members
        if not agg:
            continue
        S = int(agg[rng.integers(len(agg))])
        inS = np.array([S >> i & 1 for i in range(g.n)], dtype=bool)
        gap = g.v(S) - float(y[inS].sum())
        share = rng.dirichlet(np.ones(inS.sum()))
        x = y.copy()
        x[inS] += rng.uniform(0.1, 0.9) * gap * share
        if check_external:
            z = _repair(g, x[inS], S)
            if z is None:
                continue
            x[~inS] = z
        else:
            x[~inS] = y[~inS] - (x[inS].sum() - y[inS].sum()) / (~inS).sum()
        wit = outvotes(g, x, y, check_external=check_external)
        if wit is None:
            continue
        rep.pairs += 1
        tx, ty = dissatisfaction(g, x), dissatisfaction(g, y)
        if tx > ty + 1e-12:
            rep.violations += 1
            if rep.first_violation is None:
                rep.first_violation = (x, y, wit.via, tx, ty)
        if check_external and _outside_aggrieved(g, x, wit.via):
            rep.subset_failures += 1
    return rep
