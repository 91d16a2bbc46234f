"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Sized for the small LPs of this package (at most a few hundred rows). The
tableau keeps the phase-one artificial columns so that B^-1, and with it the
dual solution, can be read off at the end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-11
MAX_PIVOTS = 50_000


@dataclass
class LpResult:
    status: str  # "feasible" | "infeasible" | "unbounded"
    primal: np.ndarray | None = None
    objective: float | None = None
    certificate: np.ndarray | None = None
    collection: object = None  # set by the balancedness oracles

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


class LpFailure(RuntimeError):
    pass


def _pivot(T: np.ndarray, basis: np.ndarray, i: int, j: int) -> None:
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    T -= np.outer(col, T[i])
    basis[i] = j


def _run(T: np.ndarray, basis: np.ndarray, ncols: int) -> str:
    """Minimize the objective in the last tableau row over columns < ncols."""
    m = T.shape[0] - 1
    for _ in range(MAX_PIVOTS):
        red = T[m, :ncols]
        cand = np.flatnonzero(red < -FEAS_TOL)
        if cand.size == 0:
            return "optimal"
        j = int(cand[0])  # Bland: lowest index entering
        col = T[:m, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + FEAS_TOL * max(1.0, abs(best))]
        # Bland: among tied rows, the basic variable with the lowest index leaves
        i = int(tied[np.argmin(basis[tied])])
        _pivot(T, basis, i, j)
    raise LpFailure("simplex pivot limit reached")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=None) -> LpResult:
    """Minimize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``.

    Variables are nonnegative unless flagged in the boolean array ``free``.
    For feasible problems ``certificate`` holds the duals of the constraint
    rows (inequality rows first, then equalities) in the sign convention of
    ``y @ A = c`` on the basic columns. For infeasible problems it holds a
    Farkas ray ``y`` over the same rows with ``y @ A >= 0`` (free columns: = 0)
    and ``y @ b < 0``.
    """
    c = np.asarray(c, dtype=float)
    nv = c.shape[0]
    A_ub = np.zeros((0, nv)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, nv)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    free = np.zeros(nv, dtype=bool) if free is None else np.asarray(free, dtype=bool)

    # standard form: split free columns, add slacks to inequality rows
    neg_cols = np.flatnonzero(free)
    mu, me = A_ub.shape[0], A_eq.shape[0]
    m = mu + me
    A = np.vstack([A_ub, A_eq]) if m else np.zeros((0, nv))
    A = np.hstack([A, -A[:, neg_cols], np.vstack([np.eye(mu), np.zeros((me, mu))])])
    cost = np.concatenate([c, -c[neg_cols], np.zeros(mu)])
    b = np.concatenate([b_ub, b_eq])
    ns = A.shape[1]

    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    # tableau columns: structural | artificial | rhs
    T = np.zeros((m + 1, ns + m + 1))
    T[:m, :ns] = A
    T[:m, ns:ns + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :ns] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = np.arange(ns, ns + m)

    _run(T, basis, ns)
    if -T[m, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        # phase-one duals y = 1 - (artificial reduced costs); the ray is -y
        ray = (T[m, ns:ns + m] - 1.0) * sign
        return LpResult("infeasible", certificate=ray)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= ns:
            nz = np.flatnonzero(np.abs(T[i, :ns]) > PIVOT_TOL)
            if nz.size:
                _pivot(T, basis, i, int(nz[0]))
            else:
                keep[i] = False
    rows = np.flatnonzero(keep)
    T = np.vstack([T[rows], T[-1:]])
    basis = basis[rows]
    mk = rows.size

    T[mk, :] = 0.0
    T[mk, :ns] = cost
    for i, j in enumerate(basis):
        if T[mk, j] != 0.0:
            T[mk] -= T[mk, j] * T[i]
    status = _run(T, basis, ns)
    if status == "unbounded":
        return LpResult("unbounded")

    xs = np.zeros(ns)
    xs[basis] = T[:mk, -1]
    x = xs[:nv].copy()
    x[neg_cols] -= xs[nv:nv + neg_cols.size]
    # duals y = c_B B^-1 with B^-1 stored in the artificial columns
    binv = T[:mk, ns:ns + m]
    y = cost[basis] @ binv * sign
    return LpResult("feasible", primal=x, objective=float(c @ x), certificate=y)
