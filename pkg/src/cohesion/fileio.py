"""Game files (JSON), trajectory files (CSV) and atomic output."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .flow import Status, Trajectory
from .game import Game, GameError, coalition_label, gen_symmetric, grand, normalize, parse_coalition


class GameFileError(GameError):
    """Malformed game file; ``line`` and ``col`` locate syntax errors (1-based)."""

    def __init__(self, msg, line=None, col=None):
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(msg + where)
        self.line, self.col = line, col


def atomic_write_text(path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# game files

def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise GameFileError(f"duplicate key {k!r}")
        out[k] = v
    return out


def parse_game(text: str) -> Game:
    """Parse a JSON game document.

    Keys: ``players`` (list of labels), then either ``values`` (coalition
    label -> worth, labels are players joined by "+") or ``formula``
    ({"type": "symmetric", "c": real}); optional ``normalize`` (default true).
    """
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise GameFileError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise GameFileError("top level must be an object")
    unknown = set(doc) - {"players", "values", "formula", "normalize"}
    if unknown:
        raise GameFileError(f"unknown keys: {sorted(unknown)}")
    players = doc.get("players")
    if not isinstance(players, list) or not all(isinstance(p, str) and p for p in players):
        raise GameFileError("'players' must be a list of nonempty strings")
    if any("+" in p or "|" in p or p != p.strip() for p in players):
        raise GameFileError("player labels may not contain '+', '|' or surrounding spaces")
    n = len(players)
    do_norm = doc.get("normalize", True)
    if not isinstance(do_norm, bool):
        raise GameFileError("'normalize' must be true or false")
    if ("values" in doc) == ("formula" in doc):
        raise GameFileError("give exactly one of 'values' and 'formula'")

    if "formula" in doc:
        f = doc["formula"]
        if not isinstance(f, dict) or f.get("type") != "symmetric" or set(f) != {"type", "c"}:
            raise GameFileError("formula must be {\"type\": \"symmetric\", \"c\": <real>}")
        c = f["c"]
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise GameFileError("formula coefficient 'c' must be a number")
        g = gen_symmetric(n, float(c))
        return Game(n, g.values, tuple(players))

    raw = doc["values"]
    if not isinstance(raw, dict):
        raise GameFileError("'values' must be an object")
    values = np.full(2**n - 1, np.nan)
    for label, worth in raw.items():
        mask = parse_coalition(label, players)
        if isinstance(worth, bool) or not isinstance(worth, (int, float)):
            raise GameFileError(f"worth of {label!r} must be a number")
        if not np.isnan(values[mask - 1]):
            raise GameFileError(f"coalition {label!r} listed twice")
        values[mask - 1] = float(worth)
    missing = [coalition_label(m, players) for m in range(1, grand(n) + 1)
               if np.isnan(values[m - 1])]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise GameFileError(f"{len(missing)} coalitions missing a worth: {shown}")
    g = Game(n, values, tuple(players))
    return normalize(g) if do_norm else g


def load_game(path) -> Game:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise GameFileError(f"cannot read {path}: {exc.strerror}") from None
    return parse_game(text)


def dump_game(g: Game) -> str:
    values = {coalition_label(m, g.names): float(g.values[m - 1]) for m in range(1, grand(g.n) + 1)}
    return json.dumps({"players": list(g.names), "values": values, "normalize": False},
                      indent=2) + "\n"


def save_game(g: Game, path) -> None:
    atomic_write_text(path, dump_game(g))


# ---------------------------------------------------------------------------
# trajectory files

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dump_trajectory(traj: Trajectory) -> str:
    n = traj.x.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *[f"x_{i + 1}" for i in range(n)], "theta", "phi_norm", "region_hash"])
    for k in range(len(traj.t)):
        w.writerow([_fmt(traj.t[k]), *map(_fmt, traj.x[k]), _fmt(traj.theta[k]),
                    _fmt(traj.phi_norm[k]), traj.region[k]])
    buf.write(f"# status: {traj.status}\n")
    buf.write(f"# integrator: {traj.integrator}\n")
    buf.write(f"# tolerance: {_fmt(traj.tolerance)}\n")
    buf.write(f"# stats: {json.dumps(traj.stats, sort_keys=True)}\n")
    return buf.getvalue()


def parse_trajectory(text: str) -> Trajectory:
    lines = text.splitlines()
    meta = {}
    rows = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif line.strip():
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if header is None or header[0] != "t" or header[-3:] != ["theta", "phi_norm", "region_hash"]:
        raise ValueError("not a trajectory file: bad header")
    n = len(header) - 4
    t, x, theta, phi, region = [], [], [], [], []
    for rec in reader:
        if len(rec) != n + 4:
            raise ValueError(f"row has {len(rec)} fields, expected {n + 4}")
        t.append(float(rec[0]))
        x.append([float(v) for v in rec[1:n + 1]])
        theta.append(float(rec[n + 1]))
        phi.append(float(rec[n + 2]))
        region.append(rec[n + 3])
    for key in ("status", "integrator", "stats"):
        if key not in meta:
            raise ValueError(f"trajectory file lacks the '{key}' metadata line")
    return Trajectory(np.array(t), np.array(x, dtype=float).reshape(-1, n), np.array(theta),
                      np.array(phi), region, Status(meta["status"]), meta["integrator"],
                      json.loads(meta["stats"]), float(meta.get("tolerance", "1e-12")))


def save_trajectory(traj: Trajectory, path) -> None:
    atomic_write_text(path, dump_trajectory(traj))


def load_trajectory(path) -> Trajectory:
    return parse_trajectory(Path(path).read_text())
