"""Integration of the cohesion flow dx/dt = phi(x).

Three integrators share one termination contract:

* ``integrate_rk4``: classical fixed-step Runge-Kutta.
* ``integrate_adaptive``: Dormand-Prince 5(4) with local error control.
* ``integrate_exact``: region by region closed-form solution of the affine
  system dx/dt = -A x + b, with certified event location at region changes.

A run stops once |phi| <= ``stop_phi_norm`` or theta <= ``stop_theta``; it is
classified ReachedCore if the final point is a core member at tolerance 1e-8
and StationaryPoint otherwise.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .game import Game, as_preimputation, require_normalized

log = logging.getLogger(__name__)

CORE_TOL = 1e-8


class Status(str, Enum):
    REACHED_CORE = "ReachedCore"
    STATIONARY = "StationaryPoint"
    MAX_TIME = "MaxTime"
    STEP_UNDERFLOW = "StepUnderflow"

    def __str__(self):
        return self.value


class FlowError(RuntimeError):
    """Integration produced a non-finite state; ``trajectory`` holds the valid prefix."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


@dataclass
class FlowConfig:
    stop_phi_norm: float = 1e-10
    stop_theta: float = 1e-18
    t_max: float = 1e4
    dt: float = 1e-3
    adaptive_tol: float = 1e-9
    sample_stride: int = 1

    def __post_init__(self):
        for name in ("stop_phi_norm", "stop_theta", "t_max", "dt", "adaptive_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.sample_stride) < 1:
            raise ValueError("sample_stride must be a positive integer")
        self.sample_stride = int(self.sample_stride)


def region_hash(masks) -> str:
    data = np.asarray(sorted(int(m) for m in masks), dtype="<i8").tobytes()
    return hashlib.blake2b(data, digest_size=8).hexdigest()


@dataclass
class Segment:
    """Closed-form piece x(t) = x_inf + W exp(-mu (t - t0)) on [t0, t1]."""

    t0: float
    t1: float
    x_inf: np.ndarray
    W: np.ndarray
    mu: np.ndarray

    def at(self, t):
        return self.x_inf + self.W @ np.exp(-self.mu * (t - self.t0))

    def dissipation(self, t) -> float:
        """Closed form of the integral of |phi|^2 over [t0, t]."""
        c2 = np.einsum("ij,ij->j", self.W, self.W)
        return float(0.5 * np.sum(self.mu * c2 * -np.expm1(-2.0 * self.mu * (t - self.t0))))


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    phi_norm: np.ndarray
    region: list[str]
    status: Status
    integrator: str
    stats: dict = field(default_factory=dict)
    tolerance: float = 1e-12
    segments: list[Segment] = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.t)

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def at(self, t: float) -> np.ndarray:
        """State at time t: closed form where available, else linear interpolation.

        Past the last sample the final state is returned (runs end at rest).
        """
        if t >= self.t[-1]:
            return self.x[-1].copy()
        if t <= self.t[0]:
            return self.x[0].copy()
        for seg in self.segments:
            if seg.t0 <= t <= seg.t1:
                return seg.at(t)
        k = int(np.searchsorted(self.t, t))
        w = (t - self.t[k - 1]) / (self.t[k] - self.t[k - 1])
        return (1 - w) * self.x[k - 1] + w * self.x[k]


class _Recorder:
    def __init__(self, g: Game):
        self.g = g
        self.t, self.x, self.theta, self.phi, self.region = [], [], [], [], []

    def add(self, t, x, region=None):
        g = self.g
        e = g.proper_values - g.proper_indicators @ x
        pos = np.maximum(e, 0.0)
        if region is None:
            region = region_hash(g.proper_masks[e > 0])
        if self.t and t <= self.t[-1]:
            self.t[-1], self.x[-1] = t, x.copy()
            self.theta[-1] = 0.5 * float(pos @ pos)
            self.phi[-1] = _norm(pos @ g.proper_etas)
            self.region[-1] = region
            return
        self.t.append(float(t))
        self.x.append(x.copy())
        self.theta.append(0.5 * float(pos @ pos))
        self.phi.append(_norm(pos @ g.proper_etas))
        self.region.append(region)

    def build(self, status, integrator, stats, tolerance, segments=()):
        if "region_crossings" not in stats:
            stats["region_crossings"] = sum(a != b for a, b in zip(self.region, self.region[1:]))
        return Trajectory(np.array(self.t), np.array(self.x).reshape(-1, self.g.n),
                          np.array(self.theta), np.array(self.phi), list(self.region),
                          Status(status), integrator, stats, tolerance, list(segments))


def _field(g: Game):
    P, v, E = g.proper_indicators, g.proper_values, g.proper_etas

    def phi(x):
        return np.maximum(v - P @ x, 0.0) @ E
    return phi


def _state(g: Game, x):
    e = g.proper_values - g.proper_indicators @ x
    pos = np.maximum(e, 0.0)
    return 0.5 * float(pos @ pos), pos @ g.proper_etas


def _norm(v) -> float:
    return math.sqrt(float(v @ v))


def _classify(g: Game, x) -> Status:
    from .corelp import core_membership
    if core_membership(g, x, CORE_TOL).member:
        return Status.REACHED_CORE
    return Status.STATIONARY


def _should_stop(theta, phi, cfg: FlowConfig) -> bool:
    return theta <= cfg.stop_theta or _norm(phi) <= cfg.stop_phi_norm


def _start(g: Game, x0):
    require_normalized(g)
    x = as_preimputation(x0, g.n).copy()
    return x - x.mean()


# ---------------------------------------------------------------------------
# fixed-step RK4

def rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_rk4(g: Game, x0, cfg: FlowConfig | None = None) -> Trajectory:
    cfg = cfg or FlowConfig()
    x = _start(g, x0)
    f = _field(g)
    rec = _Recorder(g)
    tic = time.perf_counter()
    t, steps = 0.0, 0
    rec.add(t, x)
    while True:
        theta, phi = _state(g, x)
        if _should_stop(theta, phi, cfg):
            status = _classify(g, x)
            break
        if t >= cfg.t_max:
            status = Status.MAX_TIME
            break
        h = min(cfg.dt, cfg.t_max - t)
        if h < 1e-14 * max(1.0, t):
            status = Status.MAX_TIME
            break
        x = rk4_step(f, x, h)
        x -= x.mean()
        t = cfg.t_max if h < cfg.dt else t + h
        steps += 1
        if not np.all(np.isfinite(x)):
            traj = rec.build(Status.MAX_TIME, "rk4", {"steps": steps}, cfg.dt**4)
            raise FlowError(f"non-finite state at t={t:g}", traj)
        if steps % cfg.sample_stride == 0:
            rec.add(t, x)
    rec.add(t, x)
    stats = {"steps": steps, "wall_time": time.perf_counter() - tic}
    return rec.build(status, "rk4", stats, max(cfg.dt**4, 1e-12))


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


def _dp_step(f, x, k1, h):
    """One Dormand-Prince step; returns (x_new, k7, error estimate)."""
    K = np.empty((7, x.shape[0]))
    K[0] = k1
    for i in range(1, 7):
        K[i] = f(x + h * (np.asarray(_DP_A[i]) @ K[:i]))
    x_new = x + h * (_DP_B5[:6] @ K[:6])
    return x_new, K[6], h * (_DP_E @ K)


class _Adaptive:
    """Step-size controlled DP45 marcher shared by the adaptive and exact integrators."""

    def __init__(self, f, tol, h_max, h0=1e-3):
        self.f, self.tol, self.h_max = f, tol, h_max
        self.h = min(h0, h_max)
        self.rejected = 0

    def step(self, x, k1, t, h_cap):
        """Advance by one accepted step no longer than h_cap; None on underflow."""
        h = min(self.h, h_cap, self.h_max)
        while True:
            if h < 1e-14 * max(1.0, t):
                return None
            x_new, k7, err = _dp_step(self.f, x, k1, h)
            err_norm = float(np.abs(err).max()) if np.all(np.isfinite(err)) else np.inf
            if err_norm <= self.tol:
                fac = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * (self.tol / err_norm) ** 0.2))
                self.h = h * fac
                x_new -= x_new.mean()
                return x_new, k7, h
            self.rejected += 1
            h *= max(0.1, 0.9 * (self.tol / err_norm) ** 0.2) if np.isfinite(err_norm) else 0.1


def stiffness_bound(g: Game) -> float:
    """Spectral norm of sum eta_S eta_S^T over all proper S.

    Every region matrix A is a sub-sum of PSD terms, so this bounds |A| on
    every region and hence the global Lipschitz constant of the field.
    """
    E = g.proper_etas
    return float(np.linalg.eigvalsh(E.T @ E)[-1])


def integrate_adaptive(g: Game, x0, cfg: FlowConfig | None = None) -> Trajectory:
    """Dormand-Prince 5(4) with max-norm local error <= ``adaptive_tol`` per step.

    Steps are also capped at 2 / L (L from ``stiffness_bound``) so the scheme
    stays well inside its stability interval; without the cap the controller
    parks at the stability edge near rest points and |phi| stalls at the
    tolerance level instead of decaying.
    """
    cfg = cfg or FlowConfig()
    x = _start(g, x0)
    f = _field(g)
    march = _Adaptive(f, cfg.adaptive_tol, 2.0 / stiffness_bound(g))
    rec = _Recorder(g)
    tic = time.perf_counter()
    t, steps = 0.0, 0
    rec.add(t, x)
    k1 = f(x)
    while True:
        theta, phi = _state(g, x)
        if _should_stop(theta, phi, cfg):
            status = _classify(g, x)
            break
        if t >= cfg.t_max:
            status = Status.MAX_TIME
            break
        out = march.step(x, k1, t, cfg.t_max - t)
        if out is None:
            status = Status.STEP_UNDERFLOW
            break
        x, k1, h = out
        k1 = f(x)  # re-evaluate after re-projection
        t = cfg.t_max if cfg.t_max - t - h <= 1e-14 * max(1.0, t) else t + h
        steps += 1
        if not np.all(np.isfinite(x)):
            raise FlowError(f"non-finite state at t={t:g}",
                            rec.build(Status.MAX_TIME, "adaptive", {"steps": steps},
                                      cfg.adaptive_tol))
        if steps % cfg.sample_stride == 0:
            rec.add(t, x)
    rec.add(t, x)
    stats = {"steps": steps, "rejected": march.rejected,
             "wall_time": time.perf_counter() - tic}
    return rec.build(status, "adaptive", stats, cfg.adaptive_tol)


# ---------------------------------------------------------------------------
# exact region-wise integration

EVENT_TIME_TOL = 1e-12
KERNEL_RTOL = 1e-12
_MAX_SCAN = 200_000
_ZENO_LIMIT = 50


class _Region:
    """Closed-form motion inside one region, started at x."""

    def __init__(self, g: Game, members: np.ndarray, x: np.ndarray):
        E = g.proper_etas[members]
        A = E.T @ E
        b = g.proper_values[members] @ E
        mu, Q = np.linalg.eigh(A)
        pos = mu > KERNEL_RTOL * max(mu[-1], 0.0)
        self.mu = mu[pos]
        Qp = Q[:, pos]
        x_p = Qp @ ((Qp.T @ b) / self.mu)
        c = Qp.T @ (x - x_p)
        Qk = Q[:, ~pos]
        # rest point built from x_p and the kernel part of x; x - Qp c cancels badly for far x
        self.x_inf = x_p + Qk @ (Qk.T @ x)
        self.W = Qp * c
        self.phi_modes = self.mu * c  # |phi(tau)|^2 = sum (mu c)^2 exp(-2 mu tau)
        P = g.proper_indicators
        self.alpha = g.proper_values - P @ self.x_inf
        self.B = -(P @ self.W)
        self.absB = np.abs(self.B)
        self.members = members

    def x_at(self, tau):
        return self.x_inf + self.W @ np.exp(-self.mu * tau)

    def excess_at(self, tau):
        return self.alpha + self.B @ np.exp(-self.mu * tau)

    def done(self, tau, cfg: FlowConfig) -> bool:
        """Whether a stop threshold holds at tau (both quantities decrease in tau).

        Thresholds are halved so the direct evaluation at the stopping point,
        which carries rounding the modal form does not, still passes.
        """
        ex = np.exp(-self.mu * tau)
        r = self.phi_modes * ex
        if float(r @ r) <= (0.5 * cfg.stop_phi_norm) ** 2:
            return True
        e = self.alpha[self.members] + self.B[self.members] @ ex
        return 0.5 * float(e @ e) <= 0.5 * cfg.stop_theta

    def stop_bound(self, cfg: FlowConfig) -> float:
        """A time by which |phi| <= stop_phi_norm is guaranteed."""
        a = np.abs(self.phi_modes)
        with np.errstate(divide="ignore"):
            hi = np.log(2.0 * np.sqrt(len(a)) * a / cfg.stop_phi_norm) / self.mu
        hi = float(max(hi.max(initial=0.0), 0.0)) + 1e-9
        while not self.done(hi, cfg):  # rounding in the bound
            hi *= 2.0
        return hi

    def stop_time(self, cfg: FlowConfig, hi: float) -> float:
        """First tau in [0, hi] at which a stop threshold holds; done(hi) must hold."""
        if self.done(0.0, cfg):
            return 0.0
        lo = 0.0
        while hi - lo > 1e-9 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if self.done(mid, cfg):
                hi = mid
            else:
                lo = mid
        return hi


class _ScanFailure(RuntimeError):
    pass


def _labels(g: Game, x, band):
    """Region membership at x, breaking near-ties by the sign of d e_S / dt."""
    e = g.proper_values - g.proper_indicators @ x
    phi = np.maximum(e, 0.0) @ g.proper_etas
    rate = -(g.proper_indicators @ phi)
    near = np.abs(e) <= 2 * band
    rising = rate > 1e-10 * (1.0 + _norm(phi))
    return (e > 2 * band) | (near & rising), e


def _scan(reg: _Region, sign, offset, horizon, floor):
    """Certified search for the first tau in (0, horizon] where some g_T < 0.

    g_T(tau) = sign_T e_T(tau) + offset_T is a constant plus a sum of decaying
    exponentials, so |g_T''| on [tau, inf) is bounded by its value at tau; the
    step to the first zero of the resulting quadratic lower bound cannot skip a
    crossing. Steps shorter than ``floor`` are lengthened to ``floor``.

    Returns (bracket or None, recorded scan points, iteration count).
    """
    mu, alpha, B, absB = reg.mu, reg.alpha, reg.B, reg.absB
    mu2 = mu * mu
    tau, lo = 0.0, 0.0
    points = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for it in range(_MAX_SCAN):
            ex = np.exp(-mu * tau)
            gv = sign * (alpha + B @ ex) + offset
            if gv.min() < 0.0:
                return (lo, tau), points, it
            if tau >= horizon:
                return None, points, it
            if tau > 0.0:
                points.append(tau)
            d1 = sign * (B @ (-mu * ex))
            m2 = absB @ (mu2 * ex)
            root = np.sqrt(d1 * d1 + 2.0 * m2 * gv)
            # positive root of g + d1 s - m2 s^2 / 2, in cancellation-free form
            rising = d1 >= 0.0
            step = np.where(rising, (d1 + root) / m2, 2.0 * gv / (root - d1))
            dt = float(np.fmin.reduce(step))  # NaN (0/0) marks a constant excess
            dt = horizon if dt != dt else max(dt, floor)
            lo, tau = tau, min(tau + dt, horizon)
    raise _ScanFailure("event scan did not terminate")


def _bisect(reg: _Region, sign, offset, lo, hi):
    """Locate the crossing in [lo, hi] to EVENT_TIME_TOL; returns the far end.

    False position with the Illinois modification, falling back to plain
    bisection whenever the bracket fails to halve over two iterations.
    """
    crossing = np.flatnonzero(sign * reg.excess_at(hi) + offset < 0.0)
    sign, offset = sign[crossing], offset[crossing]
    alpha, B, mu = reg.alpha[crossing], reg.B[crossing], reg.mu

    def gmin(tau):
        return float((sign * (alpha + B @ np.exp(-mu * tau)) + offset).min())

    glo, ghi = gmin(lo), gmin(hi)
    side = 0
    widths = [hi - lo, hi - lo]
    while hi - lo > EVENT_TIME_TOL:
        w = hi - lo
        if w > 0.5 * widths[-2] or glo == ghi:
            p = 0.5 * (lo + hi)
        else:
            p = hi - ghi * w / (ghi - glo)
            p = min(max(p, lo + 0.25 * EVENT_TIME_TOL), hi - 0.25 * EVENT_TIME_TOL)
        if not lo < p < hi:
            break
        gp = gmin(p)
        if gp < 0.0:
            hi, ghi = p, gp
            if side == -1:
                glo *= 0.5
            side = -1
        else:
            lo, glo = p, gp
            if side == 1:
                ghi *= 0.5
            side = 1
        widths.append(w)
    return hi


def integrate_exact(g: Game, x0, cfg: FlowConfig | None = None) -> Trajectory:
    """Piecewise closed-form integration of the cohesion flow.

    Inside a region with aggrieved collection C, dx/dt = -A x + b where
    A = sum eta_S eta_S^T and b = sum v(S) eta_S over C. Decomposing x - x_p on
    the eigenvectors of A gives modes decaying as exp(-mu t) and constant
    kernel modes. The run advances analytically to the first time an excess
    changes sign (certified scan plus bisection to 1e-12 in time), relabels
    the region there, and repeats until a stop threshold is met inside a region.
    """
    cfg = cfg or FlowConfig()
    x = _start(g, x0)
    f = _field(g)
    rec = _Recorder(g)
    tic = time.perf_counter()
    vmax = float(np.abs(g.proper_values).max(initial=0.0))
    masks = g.proper_masks
    t = 0.0
    segments: list[Segment] = []
    stats = {"steps": 0, "region_crossings": 0, "segments": 0, "fallbacks": 0}
    short_events = 0
    stuck = False
    stop_checks = 0  # closed-form stops not yet confirmed by direct evaluation
    status = None
    while status is None:
        # tie band relative to the current magnitudes; far starts shrink as they move in
        band = 1e-12 * (1.0 + vmax + float(np.abs(x).sum()))
        members, e0 = _labels(g, x, band)
        label = region_hash(masks[members])
        rec.add(t, x, label)
        theta, phi = _state(g, x)
        if _should_stop(theta, phi, cfg) or not members.any() or stop_checks >= 3:
            status = _classify(g, x)
            break
        if t >= cfg.t_max:
            status = Status.MAX_TIME
            break
        if short_events >= _ZENO_LIMIT or stuck:
            # chattering between regions or a failed scan: step across with DP45
            stats["fallbacks"] += 1
            short_events, stuck = 0, False
            march = _Adaptive(f, min(cfg.adaptive_tol, 1e-10), 2.0 / stiffness_bound(g))
            t_end = min(cfg.t_max, t + 1e-6 * (1.0 + t))
            k1 = f(x)
            while t < t_end:
                out = march.step(x, k1, t, t_end - t)
                if out is None:
                    status = Status.STEP_UNDERFLOW
                    break
                x, _, h = out
                k1 = f(x)
                t += h
                stats["steps"] += 1
            continue

        reg = _Region(g, np.flatnonzero(members), x)
        sign = np.where(members, 1.0, -1.0)
        offset = band + np.maximum(0.0, -sign * e0)
        bound = reg.stop_bound(cfg)
        horizon = min(bound, cfg.t_max - t)
        floor = 1e-6 / float(reg.mu.max())
        try:
            bracket, points, iters = _scan(reg, sign, offset, horizon, floor)
        except _ScanFailure:
            stuck = True
            continue
        stats["steps"] += iters + 1
        stats["segments"] += 1
        tau = _bisect(reg, sign, offset, *bracket) if bracket is not None else horizon
        stopped = reg.done(tau, cfg)
        if stopped:
            tau = reg.stop_time(cfg, tau)
            bracket = None
        points = [p for p in points if p < tau]
        for k, p in enumerate(points, 1):
            if k % cfg.sample_stride == 0:
                rec.add(t + p, reg.x_at(p), label)
        segments.append(Segment(t, t + tau, reg.x_inf, reg.W, reg.mu))
        x = reg.x_at(tau)
        x -= x.mean()
        if not np.all(np.isfinite(x)):
            raise FlowError(f"non-finite state at t={t:g}",
                            rec.build(Status.MAX_TIME, "exact", stats, EVENT_TIME_TOL, segments))
        t += tau
        if bracket is not None:
            stats["region_crossings"] += 1
            short_events = short_events + 1 if tau < 1e-9 else 0
            continue
        if stopped:
            stop_checks += 1  # confirmed (or given up on) at the top of the loop
            continue
        rec.add(t, x, label)
        status = Status.MAX_TIME
    stats["wall_time"] = time.perf_counter() - tic
    return rec.build(status, "exact", stats, EVENT_TIME_TOL, segments)


INTEGRATORS = {
    "rk4": integrate_rk4,
    "adaptive": integrate_adaptive,
    "exact": integrate_exact,
}


def integrate(g: Game, x0, cfg: FlowConfig | None = None, integrator: str = "exact") -> Trajectory:
    try:
        fn = INTEGRATORS[integrator]
    except KeyError:
        raise ValueError(f"unknown integrator {integrator!r}; choose from {sorted(INTEGRATORS)}")
    return fn(g, x0, cfg)
