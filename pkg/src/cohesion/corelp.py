"""LP oracles: balanced collections, core membership, least core, distance to the core."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import CoalitionCollection
from .game import Game, GameError, as_preimputation, excesses, grand, indicator, require_normalized
from .simplex import FEAS_TOL, LpFailure, LpResult, linprog

MEMBERSHIP_TOL = 1e-8


class EmptyCore(GameError):
    pass


class NonConvergence(RuntimeError):
    pass


def _as_collection(coll) -> CoalitionCollection:
    return coll if isinstance(coll, CoalitionCollection) else CoalitionCollection(tuple(coll))


def _incidence(coll: CoalitionCollection, n: int) -> np.ndarray:
    """Players x coalitions 0/1 matrix."""
    for m in coll:
        if m > grand(n):
            raise GameError(f"coalition mask {m} out of range for n={n}")
    return np.array([indicator(m, n) for m in coll], dtype=float).reshape(len(coll), n).T


# ---------------------------------------------------------------------------
# balanced collections

def is_balanced(coll, n: int) -> LpResult:
    """Strictly positive balancing weights, found by maximizing the smallest weight.

    Weights are written lambda_S = t + mu_S with t, mu >= 0; the collection is
    balanced iff the optimal t exceeds the LP tolerance.
    """
    coll = _as_collection(coll)
    if not len(coll):
        raise GameError("balancedness is undefined for the empty collection")
    M = _incidence(coll, n)
    k = len(coll)
    A_eq = np.hstack([M.sum(axis=1, keepdims=True), M])
    c = np.zeros(k + 1)
    c[0] = -1.0
    res = linprog(c, A_eq=A_eq, b_eq=np.ones(n))
    if not res.feasible:
        return LpResult("infeasible", certificate=res.certificate)
    t = res.primal[0]
    if t <= FEAS_TOL:
        return LpResult("infeasible", objective=float(t))
    weights = t + res.primal[1:]
    return LpResult("feasible", primal=weights, objective=float(t),
                    collection=CoalitionCollection(coll.members, tuple(weights)))


def contains_balanced(coll, n: int) -> LpResult:
    """Feasibility of sum lambda_S 1^S = 1^N with lambda >= 0.

    A vertex solution is returned; its support is a balanced subcollection.
    Infeasible means the collection is unbalanced, and the certificate is a
    Farkas ray y with y(S) >= 0 for every member and y(N) < 0.
    """
    coll = _as_collection(coll)
    if not len(coll):
        return LpResult("infeasible", certificate=-np.ones(n))
    M = _incidence(coll, n)
    res = linprog(np.zeros(len(coll)), A_eq=M, b_eq=np.ones(n))
    if not res.feasible:
        return res
    lam = res.primal
    support = lam > 1e-12
    res.collection = CoalitionCollection(
        tuple(m for m, s in zip(coll, support) if s), tuple(lam[support]))
    return res


def eta_zero_check(coll, weights, n: int) -> bool:
    """True iff the weighted sum of projected indicators vanishes."""
    coll = _as_collection(coll)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(coll),) or np.any(w <= 0):
        raise GameError("weights must be positive, one per member")
    M = _incidence(coll, n).T
    etas = M - M.sum(axis=1, keepdims=True) / n
    return bool(np.abs(w @ etas).max(initial=0.0) <= 1e-9)


# ---------------------------------------------------------------------------
# core geometry

@dataclass
class CoreReport:
    member: bool
    violations: list[tuple[int, float]] = field(default_factory=list)
    tol: float = MEMBERSHIP_TOL


def core_membership(g: Game, x, tol: float = MEMBERSHIP_TOL) -> CoreReport:
    """Core test on the proper coalitions; x must lie in X to the efficiency tolerance.

    The grand coalition is covered by that validation, so rounding in x(N) never
    shows up as a violation even at tol = 0.
    """
    require_normalized(g)
    x = as_preimputation(x, g.n)
    e = excesses(g, x)
    bad = np.flatnonzero(e > tol)
    order = bad[np.argsort(-e[bad], kind="stable")]
    violations = [(int(i) + 1, float(e[i])) for i in order]
    return CoreReport(not violations, violations, tol)


def epsilon_core_membership(g: Game, x, eps: float) -> bool:
    require_normalized(g)
    return bool(np.all(excesses(g, x) <= eps))


def least_core(g: Game) -> tuple[float, np.ndarray]:
    """Smallest eps for which the eps-core is nonempty, with a witness point."""
    require_normalized(g)
    n = g.n
    P = g.proper_indicators
    m = P.shape[0]
    A_ub = np.hstack([-P, -np.ones((m, 1))])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_eq = np.append(np.ones(n), 0.0)[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=-g.proper_values, A_eq=A_eq, b_eq=[0.0],
                  free=np.ones(n + 1, dtype=bool))
    if not res.feasible:
        raise LpFailure(f"least-core LP returned {res.status}")
    x = res.primal[:n]
    x = x - x.mean()
    return float(res.primal[-1]), x


def core_nonempty(g: Game) -> bool:
    return least_core(g)[0] <= FEAS_TOL


def project_to_core(g: Game, x, *, tol: float = 1e-10, max_passes: int = 1_000_000,
                    check_empty: bool = True) -> np.ndarray:
    """Euclidean projection onto the core by cyclic Dykstra projections.

    Each half-space {y in X : y(S) >= v(S)} is handled inside the plane, so
    iterates never leave x(N) = 0.
    """
    require_normalized(g)
    if check_empty and not core_nonempty(g):
        raise EmptyCore("the core is empty")
    y = np.asarray(x, dtype=float).copy()
    if core_membership(g, y, 0.0).member:
        return y
    etas = g.proper_etas
    vals = g.proper_values
    sq = np.einsum("ij,ij->i", etas, etas)
    m = len(vals)
    incr = np.zeros(m)  # Dykstra increments are multiples of eta_S
    passes = 0
    while passes < max_passes:
        start, incr0 = y.copy(), incr.copy()
        for k in range(m):
            z = y + incr[k] * etas[k]
            deficit = vals[k] - etas[k] @ z
            step = deficit / sq[k] if deficit > 0 else 0.0
            y = z + step * etas[k]
            incr[k] = -step
        passes += m
        # the iterate can stall while the corrections still move, so both must settle
        if (np.linalg.norm(y - start) < tol and np.abs(incr - incr0).max() * sq.max() < tol
                and excesses(g, y).max() <= 0.1 * MEMBERSHIP_TOL):
            return y - y.mean()
    raise NonConvergence(f"Dykstra projection did not converge within {max_passes} passes")


def distance_to_core(g: Game, x, **kwargs) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - project_to_core(g, x, **kwargs)))


def sample_core_points(g: Game, count: int, rng: np.random.Generator,
                       radius: float | None = None) -> np.ndarray:
    """Core points from random perturbations of the least-core witness.

    Perturbations are kept only when they pass an exact (tol 0) membership test;
    the radius halves whenever acceptance gets rare.
    """
    from .game import random_preimputations

    eps, w = least_core(g)
    if eps > FEAS_TOL:
        raise EmptyCore("the core is empty")
    if radius is None:
        radius = 1.0 + float(np.abs(g.values).max())
    out = []
    while len(out) < count:
        batch = w + random_preimputations(g.n, 64, radius, rng)
        ok = np.all(batch @ g.proper_indicators.T >= g.proper_values, axis=1)
        out.extend(batch[ok])
        if ok.sum() < 4:
            radius *= 0.5
            if radius < 1e-12:
                out.extend([w] * (count - len(out)))
    pts = np.array(out[:count])
    return pts - pts.mean(axis=1, keepdims=True)
