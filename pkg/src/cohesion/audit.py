"""Trajectory audits: Lyapunov decrease, ensemble attraction probes, tail consistency."""

from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corelp import FEAS_TOL, distance_to_core, least_core
from .fields import dissatisfaction
from .flow import FlowConfig, Status, Trajectory, integrate, integrate_exact
from .game import Game


@dataclass
class AuditReport:
    passed: bool
    reason: str = ""
    offense: tuple[int, int] | None = None  # indices of the offending sample pair
    pairs_checked: int = 0

    def __bool__(self):
        return self.passed


def audit_lyapunov(g: Game, traj: Trajectory, stop_phi_norm: float = 1e-10) -> AuditReport:
    """Check that theta behaves as a strict Lyapunov function along ``traj``.

    (a) theta never increases, and between consecutive samples it drops by
        at least min(phi_norm)^2 * dt / 2. |phi| is non-increasing along the
        flow, so the true drop is at least min(phi_norm)^2 * dt.
    (b) a region that was left is never re-entered at a higher theta.
    Slack is ten times the integrator tolerance, scaled by max(1, theta_0).
    """
    th, ph, t, reg = traj.theta, traj.phi_norm, traj.t, traj.region
    slack = 10.0 * max(traj.tolerance, 1e-12) * max(1.0, float(th[0]) if len(th) else 1.0)
    left_at: dict[str, float] = {}
    for i in range(len(t) - 1):
        j = i + 1
        if not t[j] > t[i]:
            return AuditReport(False, "times not increasing", (i, j), i)
        drop = th[i] - th[j]
        if drop < -slack:
            return AuditReport(False, f"theta increased by {-drop:.3g}", (i, j), i)
        floor = min(ph[i], ph[j])
        if floor > stop_phi_norm:
            need = 0.5 * floor * floor * (t[j] - t[i])
            if drop < need - slack:
                return AuditReport(False, f"theta drop {drop:.3g} below required {need:.3g}",
                                   (i, j), i)
        if reg[j] != reg[i]:
            left_at[reg[i]] = th[i]
            if reg[j] in left_at and th[j] > left_at[reg[j]] + slack:
                return AuditReport(False, f"region {reg[j]} re-entered at higher theta",
                                   (i, j), i)
    return AuditReport(True, pairs_checked=max(len(t) - 1, 0))


def energy_residual(g: Game, traj: Trajectory) -> float:
    """Largest mismatch between theta drops and the closed-form dissipation per segment."""
    worst = 0.0
    for seg in traj.segments:
        d_theta = dissatisfaction(g, seg.at(seg.t1)) - dissatisfaction(g, seg.at(seg.t0))
        worst = max(worst, abs(d_theta + seg.dissipation(seg.t1)))
    return worst


def tail_consistency(g: Game, x0, t1: float, cfg: FlowConfig | None = None) -> float:
    """Sup distance between the run from gamma(t1) and the tail of the run from x0.

    Both runs use the exact integrator; the tail is compared at every sample
    time of the second run.
    """
    full = integrate_exact(g, x0, cfg)
    y0 = full.at(t1)
    y0 = y0 - y0.mean()
    tail = integrate_exact(g, y0, cfg)
    return max(float(np.abs(full.at(t1 + s) - xs).max()) for s, xs in zip(tail.t, tail.x))


# ---------------------------------------------------------------------------
# ensemble probe

@dataclass
class RunResult:
    index: int
    status: Status
    t_end: float
    theta_final: float
    theta_violation: float
    audit_passed: bool
    distance: float | None = None


@dataclass
class ProbeSummary:
    count: int
    core_empty: bool
    status_counts: dict = field(default_factory=dict)
    fraction_core: float = float("nan")
    max_distance: float | None = None
    max_theta_violation: float = 0.0
    audit_failures: int = 0
    theta_final_spread: float = 0.0
    time_histogram: tuple = ((), ())  # (counts, bin edges) over convergence times
    runs: list[RunResult] = field(default_factory=list, repr=False)

    @property
    def all_converged(self) -> bool:
        return self.core_empty or self.fraction_core == 1.0 or self.count == 0

    def as_dict(self) -> dict:
        counts, edges = self.time_histogram
        return {
            "count": self.count,
            "core_empty": self.core_empty,
            "status_counts": dict(self.status_counts),
            "fraction_core": None if self.count == 0 else self.fraction_core,
            "max_distance": self.max_distance,
            "max_theta_violation": self.max_theta_violation,
            "audit_failures": self.audit_failures,
            "theta_final_spread": self.theta_final_spread,
            "time_histogram": {"counts": list(map(int, counts)),
                               "edges": list(map(float, edges))},
        }


def _run_one(args) -> RunResult:
    g, k, x0, cfg, integrator, core_empty = args
    traj = integrate(g, x0, cfg, integrator)
    rep = audit_lyapunov(g, traj, cfg.stop_phi_norm)
    viol = float(max(np.diff(traj.theta).max(initial=0.0), 0.0))
    dist = None
    if not core_empty:
        dist = distance_to_core(g, traj.final, check_empty=False)
    return RunResult(k, traj.status, traj.t_end, float(traj.theta[-1]), viol, rep.passed, dist)


def thread_cap() -> int:
    """Worker count from COHESION_THREADS (default 1), capped by the CPU count."""
    raw = os.environ.get("COHESION_THREADS", "1")
    try:
        want = int(raw)
    except ValueError:
        raise ValueError(f"COHESION_THREADS must be an integer, got {raw!r}")
    return max(1, min(want, os.cpu_count() or 1))


def realm_probe(g: Game, ensemble, cfg: FlowConfig | None = None, integrator: str = "exact",
                workers: int | None = None, bins: int = 10) -> ProbeSummary:
    """Integrate every start and summarize attraction to the core.

    On games with an empty core the runs are still made (they end at
    stationary points) but distances to the core are not defined.
    """
    cfg = cfg or FlowConfig()
    ensemble = [np.asarray(x, dtype=float) for x in ensemble]
    core_empty = least_core(g)[0] > FEAS_TOL
    jobs = [(g, k, x, cfg, integrator, core_empty) for k, x in enumerate(ensemble)]
    workers = thread_cap() if workers is None else max(1, int(workers))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        runs = [_run_one(j) for j in jobs]
    runs.sort(key=lambda r: r.index)

    out = ProbeSummary(len(runs), core_empty, runs=runs)
    if not runs:
        return out
    out.status_counts = dict(Counter(str(r.status) for r in runs))
    reached = [r for r in runs if r.status == Status.REACHED_CORE]
    out.fraction_core = len(reached) / len(runs)
    if not core_empty:
        out.max_distance = max(r.distance for r in runs)
    out.max_theta_violation = max(r.theta_violation for r in runs)
    out.audit_failures = sum(not r.audit_passed for r in runs)
    finals = np.array([r.theta_final for r in runs])
    out.theta_final_spread = float(finals.max() - finals.min())
    times = np.array([r.t_end for r in (reached if reached else runs)])
    counts, edges = np.histogram(times, bins=bins)
    out.time_histogram = (counts, edges)
    return out
