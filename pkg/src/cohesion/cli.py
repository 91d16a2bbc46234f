"""Command-line interface: ``cohesion <command> ...``.

Exit codes: 0 success, 1 I/O failure, 2 parse or usage error, 3 payoffs off the
efficiency hyperplane, 4 integration ended by MaxTime/StepUnderflow (or a probe
start failed to reach the core), 5 empty core where a core point is required,
6 plot requested for n != 3.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

import numpy as np

from . import __version__
from .audit import realm_probe
from .corelp import (EmptyCore, contains_balanced, core_membership, core_nonempty,
                     eta_zero_check, is_balanced, least_core, project_to_core)
from .fields import CoalitionCollection, aggrieved, cohesion, dissatisfaction, region_affine
from .fileio import GameFileError, atomic_write_text, dump_trajectory, load_game
from .flow import FlowConfig, FlowError, Status, integrate
from .game import (EFFICIENCY_TOL, Game, GameError, coalition_label, default_names, grand,
                   parse_coalition, project_to_X, random_preimputations)
from .plot import PlotError, render_svg

EXIT_IO, EXIT_PARSE, EXIT_EFFICIENCY, EXIT_FLOW, EXIT_EMPTY, EXIT_PLOT = 1, 2, 3, 4, 5, 6

_NUMERIC = re.compile(r"^-[\d.]")


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _shield_negatives(argv):
    # argparse reads "-4,-3,7" or "-1e-3" as an option; a leading space keeps
    # such tokens positional and float() ignores it
    return [" " + a if _NUMERIC.match(a) else a for a in argv]


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(p) for p in text.replace(";", ",").split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text.strip()!r}")


def _payoff(g: Game, x: np.ndarray, project: bool) -> np.ndarray:
    if x.shape != (g.n,):
        raise CliError(f"expected {g.n} payoffs, got {x.shape[0]}", EXIT_PARSE)
    if abs(x.sum()) > EFFICIENCY_TOL:
        if not project:
            raise CliError(f"payoffs sum to {x.sum():.6g}, not 0; pass --project to project "
                           "onto the efficiency hyperplane", EXIT_EFFICIENCY)
        x = project_to_X(x)
    return x


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(text)


def _label(g: Game, mask: int) -> str:
    return coalition_label(mask, g.names)


def _fmtvec(x) -> str:
    return "(" + ", ".join(f"{v:.10g}" for v in x) + ")"


# ---------------------------------------------------------------------------
# commands

def cmd_eval(args) -> int:
    g = load_game(args.game)
    x = _payoff(g, args.x, args.project)
    coll = aggrieved(g, x)
    theta = dissatisfaction(g, x)
    phi = cohesion(g, x)
    lip = region_affine(g, coll).lipschitz
    rep = core_membership(g, x)
    ex = {_label(g, m): float(g.v(m) - x[[i for i in range(g.n) if m >> i & 1]].sum()) + 0.0
          for m in range(1, grand(g.n) + 1)}
    payload = {"command": "eval", "x": x.tolist(), "excesses": ex,
               "aggrieved": [_label(g, m) for m in coll], "theta": theta,
               "phi": phi.tolist(), "region_lipschitz": lip, "in_core": rep.member}
    lines = ["excesses:"]
    lines += [f"  {k:>{max(map(len, ex))}}  {v: .10g}" for k, v in ex.items()]
    lines += [f"aggrieved: {{{', '.join(payload['aggrieved'])}}}",
              f"theta: {theta:.10g}",
              f"phi: {_fmtvec(phi)}",
              f"region lipschitz: {lip:.10g}",
              "in core" if rep.member else "not in core"]
    _emit(args, payload, "\n".join(lines))
    return 0


def _config(args) -> FlowConfig:
    kw = {}
    for name, key in (("dt", "dt"), ("tol", "adaptive_tol"), ("t_max", "t_max"),
                      ("stop_phi", "stop_phi_norm")):
        val = getattr(args, name, None)
        if val is not None:
            kw[key] = val
    try:
        return FlowConfig(**kw)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE)


def cmd_flow(args) -> int:
    g = load_game(args.game)
    x0 = _payoff(g, args.x0, args.project)
    cfg = _config(args)
    try:
        traj = integrate(g, x0, cfg, args.integrator)
    except FlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLOW
    if args.out:
        atomic_write_text(args.out, dump_trajectory(traj))
    payload = {"command": "flow", "status": str(traj.status), "integrator": traj.integrator,
               "final": traj.final.tolist(), "theta": float(traj.theta[-1]),
               "phi_norm": float(traj.phi_norm[-1]), "time": traj.t_end,
               "samples": len(traj), "stats": traj.stats}
    text = "\n".join([f"status: {traj.status}", f"final: {_fmtvec(traj.final)}",
                      f"theta: {traj.theta[-1]:.6g}", f"time: {traj.t_end:.10g}",
                      f"samples: {len(traj)}"])
    _emit(args, payload, text)
    return EXIT_FLOW if traj.status in (Status.MAX_TIME, Status.STEP_UNDERFLOW) else 0


def cmd_core(args) -> int:
    g = load_game(args.game)
    sub = args.action
    if sub in ("check", "project") and args.x is None:
        raise CliError(f"core {sub} needs a payoff vector", EXIT_PARSE)
    if sub == "check":
        x = _payoff(g, args.x, args.project)
        rep = core_membership(g, x)
        payload = {"command": "core", "action": "check", "member": rep.member,
                   "tolerance": rep.tol,
                   "violations": [{"coalition": _label(g, m), "excess": e}
                                  for m, e in rep.violations]}
        text = "member" if rep.member else "not a member; violations:\n" + "\n".join(
            f"  {_label(g, m)}: excess {e:.10g}" for m, e in rep.violations)
    elif sub in ("nonempty", "least"):
        eps, w = least_core(g)
        ok = core_nonempty(g)
        payload = {"command": "core", "action": sub, "epsilon": eps, "nonempty": ok,
                   "witness": w.tolist()}
        rel = "<= 0" if eps <= 0 else "> 0"
        text = (f"epsilon* = {eps:.10g} ({rel}); core {'nonempty' if ok else 'empty'}; "
                f"witness {_fmtvec(w)}")
    else:
        x = _payoff(g, args.x, args.project)
        try:
            y = project_to_core(g, x)
        except EmptyCore as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_EMPTY
        d = float(np.linalg.norm(x - y))
        payload = {"command": "core", "action": "project", "projection": y.tolist(),
                   "distance": d}
        text = f"projection: {_fmtvec(y)}\ndistance: {d:.10g}"
    _emit(args, payload, text)
    return 0


def _parse_collection(text: str, names) -> CoalitionCollection:
    parts = [p for p in text.split("|")]
    if not text.strip() or any(not p.strip() for p in parts):
        raise GameError(f"empty coalition in collection {text!r}")
    return CoalitionCollection(tuple(parse_coalition(p, names) for p in parts))


def cmd_balanced(args) -> int:
    names = tuple(args.players.split(",")) if args.players else default_names(args.n)
    if len(names) != args.n:
        raise CliError(f"--players lists {len(names)} labels but n={args.n}", EXIT_PARSE)
    coll = _parse_collection(args.collection, names)
    res = is_balanced(coll, args.n)
    labels = [coalition_label(m, names) for m in coll]
    payload = {"command": "balanced", "collection": labels, "balanced": res.feasible}
    if res.feasible:
        w = res.primal
        E = np.array([[(1.0 if m >> i & 1 else 0.0) - bin(m).count("1") / args.n
                       for i in range(args.n)] for m in coll])
        resid = float(np.abs(w @ E).max())
        payload.update(weights=w.tolist(), eta_residual=resid,
                       eta_check=eta_zero_check(coll, w, args.n))
        text = "balanced\n" + "\n".join(f"  {l}: {a:.10g}" for l, a in zip(labels, w))
        text += f"\neta-sum residual: {resid:.3g}"
    else:
        sub = contains_balanced(coll, args.n)
        payload["contains_balanced"] = sub.feasible
        if sub.feasible:
            payload["balanced_subcollection"] = [coalition_label(m, names) for m in sub.collection]
        text = "unbalanced" if not sub.feasible else (
            "not balanced, but contains the balanced subcollection "
            + " | ".join(payload["balanced_subcollection"]))
    _emit(args, payload, text)
    return 0


def cmd_plot(args) -> int:
    g = load_game(args.game)
    if g.n != 3:
        print(f"error: plots need exactly 3 players, got n={g.n}", file=sys.stderr)
        return EXIT_PLOT
    layers = {s.strip() for s in args.layers.split(",") if s.strip()}
    bad = layers - {"heatmap", "field", "trajectories"}
    if bad:
        raise CliError(f"unknown layers: {sorted(bad)}", EXIT_PARSE)
    trajs = []
    if "trajectories" in layers:
        cfg = _config(args)
        for x0 in args.start or []:
            x0 = _payoff(g, x0, args.project)
            trajs.append(integrate(g, x0, cfg, args.integrator).x)
    svg = render_svg(g, heatmap="heatmap" in layers, field="field" in layers,
                     trajectories=trajs, extent=(-args.extent, args.extent), res=args.res,
                     arrows=args.arrows)
    if args.out:
        atomic_write_text(args.out, svg)
    else:
        sys.stdout.write(svg)
    return 0


def cmd_probe(args) -> int:
    g = load_game(args.game)
    if args.count < 0 or args.radius <= 0:
        raise CliError("--count must be >= 0 and --radius > 0", EXIT_PARSE)
    rng = np.random.default_rng(args.seed)
    starts = random_preimputations(g.n, args.count, args.radius, rng)
    summary = realm_probe(g, starts, _config(args), args.integrator)
    payload = {"command": "probe", **summary.as_dict()}
    if args.out:
        lines = ["index,status,t_end,theta_final,distance,audit"]
        lines += [f"{r.index},{r.status},{r.t_end:.17g},{r.theta_final:.17g},"
                  f"{'' if r.distance is None else format(r.distance, '.17g')},"
                  f"{'pass' if r.audit_passed else 'fail'}" for r in summary.runs]
        atomic_write_text(args.out, "\n".join(lines) + "\n")
    text = [f"starts: {summary.count}"]
    if summary.count:
        text.append("status: " + ", ".join(f"{k} {v}" for k, v in
                                           sorted(summary.status_counts.items())))
        if summary.core_empty:
            text.append("note: the core is empty; runs end at stationary points "
                        f"(theta spread {summary.theta_final_spread:.3g})")
        else:
            text.append(f"reached core: {100 * summary.fraction_core:.2f}%")
            text.append(f"max distance to core: {summary.max_distance:.3g}")
        text.append(f"max theta increase: {summary.max_theta_violation:.3g}")
        text.append(f"audit failures: {summary.audit_failures}")
        counts, edges = summary.time_histogram
        text.append("convergence times:")
        text += [f"  [{a:9.4g}, {b:9.4g}) {c}" for a, b, c in zip(edges, edges[1:], counts)]
    _emit(args, payload, "\n".join(text))
    return 0 if summary.all_converged and summary.audit_failures == 0 else EXIT_FLOW


# ---------------------------------------------------------------------------
# parser

def _flow_flags(p):
    p.add_argument("--integrator", choices=("rk4", "adaptive", "exact"), default="exact")
    p.add_argument("--dt", type=float, help="RK4 step (default 1e-3)")
    p.add_argument("--tol", type=float, help="adaptive local error tolerance (default 1e-9)")
    p.add_argument("--t-max", type=float, help="integration horizon (default 1e4)")
    p.add_argument("--stop-phi", type=float, help="stop when |phi| falls below (default 1e-10)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cohesion",
                                 description="Dissatisfaction and cohesion fields of TU games.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, x_name=None):
        p.add_argument("game", help="game file (JSON)")
        if x_name:
            p.add_argument(x_name, type=_vector, help="payoffs, comma separated, e.g. -4,-3,7")
        p.add_argument("--project", action="store_true",
                       help="project payoffs onto x(N) = 0 instead of rejecting them")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("eval", help="excesses, theta, phi and core membership at x")
    common(p, "x")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flow", help="integrate the cohesion flow from x0")
    common(p, "x0")
    _flow_flags(p)
    p.add_argument("--out", help="trajectory file (CSV)")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("core", help="core queries: check X | nonempty | least | project X")
    p.add_argument("game", help="game file (JSON)")
    p.add_argument("action", choices=("check", "nonempty", "least", "project"))
    p.add_argument("x", type=_vector, nargs="?", help="payoffs for check and project")
    p.add_argument("--project", action="store_true",
                   help="project payoffs onto x(N) = 0 instead of rejecting them")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_core)

    p = sub.add_parser("balanced", help="balancedness of a collection like 'a+b|b+c|a+c'")
    p.add_argument("collection")
    p.add_argument("-n", "--n", type=int, required=True, help="number of players")
    p.add_argument("--players", help="comma-separated player labels (default a, b, c, ...)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_balanced)

    p = sub.add_parser("plot", help="SVG figure of a 3-player game")
    common(p)
    _flow_flags(p)
    p.add_argument("--layers", default="heatmap,field,trajectories",
                   help="comma-separated subset of heatmap, field, trajectories")
    p.add_argument("--start", type=_vector, action="append",
                   help="trajectory start (repeatable)")
    p.add_argument("--extent", type=float, default=10.0, help="half-width of the plotted square")
    p.add_argument("--res", type=int, default=200, help="heatmap pixels per side")
    p.add_argument("--arrows", type=int, default=20, help="arrows per side")
    p.add_argument("--out", help="output SVG (default stdout)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("probe", help="attraction experiment over random starts")
    common(p)
    _flow_flags(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--radius", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="per-start report (CSV)")
    p.set_defaults(func=cmd_probe)
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_shield_negatives(argv))
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except EmptyCore as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLOT
    except (GameFileError, GameError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
