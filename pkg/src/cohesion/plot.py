"""Standalone SVG figures of the dissatisfaction and cohesion fields for 3-player games."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .game import Game, GameError, require_normalized

# fixed orthonormal basis of x1 + x2 + x3 = 0, so figures are reproducible
U1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
U2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
BASIS = np.stack([U1, U2], axis=1)  # (3, 2)

CORE_FILL = "#5b8fd6"
ARROW = "#c0392b"
TRAJ = "#1e8449"
SIZE = 600  # drawing area in px
MARGIN = 40


class PlotError(GameError):
    pass


def to_plane(x) -> np.ndarray:
    """Plane coordinates (p, q) of preimputations, shape (..., 2)."""
    return np.asarray(x, dtype=float) @ BASIS


def from_plane(pq) -> np.ndarray:
    return np.asarray(pq, dtype=float) @ BASIS.T


def _check(g: Game):
    if g.n != 3:
        raise PlotError(f"plots need exactly 3 players, got n={g.n}")
    require_normalized(g)


def heatmap_grid(g: Game, extent=(-10.0, 10.0), res: int = 200):
    """Pixel-centre grid over the square ``extent`` x ``extent`` in plane coordinates.

    Returns (pq, theta, core) with pq of shape (res, res, 2), row 0 at the top.
    ``core`` marks pixels whose centre has every excess <= 0.
    """
    _check(g)
    lo, hi = map(float, extent)
    step = (hi - lo) / res
    c = lo + step * (np.arange(res) + 0.5)
    P, Q = np.meshgrid(c, c[::-1])
    pq = np.stack([P, Q], axis=-1)
    X = from_plane(pq.reshape(-1, 2))
    e = g.proper_values[None, :] - X @ g.proper_indicators.T
    pos = np.maximum(e, 0.0)
    theta = 0.5 * np.einsum("ij,ij->i", pos, pos).reshape(res, res)
    core = np.all(e <= 0.0, axis=1).reshape(res, res)
    return pq, theta, core


def _gray(theta, core) -> list[list[str]]:
    s = np.sqrt(theta)
    rng = s.max() - s.min()
    z = (s - s.min()) / rng if rng > 0 else np.zeros_like(s)
    level = np.round(255 * (1.0 - z)).astype(int)  # darker = more dissatisfied
    return [[CORE_FILL if core[i, j] else f"#{level[i, j]:02x}{level[i, j]:02x}{level[i, j]:02x}"
             for j in range(s.shape[1])] for i in range(s.shape[0])]


class _Canvas:
    def __init__(self, extent):
        self.lo, self.hi = map(float, extent)
        self.k = SIZE / (self.hi - self.lo)
        self.parts: list[str] = []

    def xy(self, p, q):
        return MARGIN + (p - self.lo) * self.k, MARGIN + (self.hi - q) * self.k

    def add(self, s: str):
        self.parts.append(s)


def _heatmap(cv: _Canvas, g: Game, extent, res):
    _, theta, core = heatmap_grid(g, extent, res)
    colors = _gray(theta, core)
    px = SIZE / res
    cv.add('<g id="heatmap" shape-rendering="crispEdges">')
    for i, row in enumerate(colors):
        j = 0
        while j < res:  # merge runs of equal colour into one rectangle
            k = j
            while k + 1 < res and row[k + 1] == row[j]:
                k += 1
            cv.add(f'<rect x="{MARGIN + j * px:.3f}" y="{MARGIN + i * px:.3f}" '
                   f'width="{(k - j + 1) * px:.3f}" height="{px:.3f}" fill="{row[j]}"/>')
            j = k + 1
    cv.add("</g>")


def _field(cv: _Canvas, g: Game, extent, arrows):
    lo, hi = map(float, extent)
    cell = (hi - lo) / arrows
    c = lo + cell * (np.arange(arrows) + 0.5)
    P, Q = np.meshgrid(c, c)
    pq = np.stack([P.ravel(), Q.ravel()], axis=1)
    X = from_plane(pq)
    e = g.proper_values[None, :] - X @ g.proper_indicators.T
    phi = to_plane(np.maximum(e, 0.0) @ g.proper_etas)
    mag = np.linalg.norm(phi, axis=1)
    cap = 0.9 * cell
    ref = np.quantile(mag[mag > 0], 0.9) if np.any(mag > 0) else 1.0
    scale = cap / ref
    cv.add(f'<g id="field" stroke="{ARROW}" fill="{ARROW}" stroke-width="1.2">')
    for (p, q), d, m in zip(pq, phi, mag):
        if m <= 1e-12:
            continue
        length = min(m * scale, cap)
        tip = np.array([p, q]) + d / m * length
        x0, y0 = cv.xy(p, q)
        x1, y1 = cv.xy(*tip)
        ang = math.atan2(y1 - y0, x1 - x0)
        head = min(6.0, 0.4 * length * cv.k)
        hx = [x1 - head * math.cos(ang - s) for s in (0.4, -0.4)]
        hy = [y1 - head * math.sin(ang - s) for s in (0.4, -0.4)]
        cv.add(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}"/>')
        cv.add(f'<polygon points="{x1:.2f},{y1:.2f} {hx[0]:.2f},{hy[0]:.2f} '
               f'{hx[1]:.2f},{hy[1]:.2f}" stroke="none"/>')
    cv.add("</g>")


def _trajectories(cv: _Canvas, trajectories):
    cv.add(f'<g id="trajectories" stroke="{TRAJ}" fill="none" stroke-width="2">')
    for xs in trajectories:
        pts = to_plane(np.asarray(xs, dtype=float).reshape(-1, 3))
        coords = [cv.xy(p, q) for p, q in pts]
        path = " ".join(f"{a:.2f},{b:.2f}" for a, b in coords)
        cv.add(f'<polyline points="{path}"/>')
        (sx, sy), (ex, ey) = coords[0], coords[-1]
        cv.add(f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="4" fill="{TRAJ}"/>')
        cv.add(f'<rect x="{ex - 4:.2f}" y="{ey - 4:.2f}" width="8" height="8" '
               f'fill="white" stroke="{TRAJ}"/>')
    cv.add("</g>")


def render_svg(g: Game, *, heatmap: bool = True, field: bool = True, trajectories=(),
               extent=(-10.0, 10.0), res: int = 200, arrows: int = 20,
               title: str | None = None) -> str:
    """SVG 1.1 document of the requested layers over the square ``extent``^2.

    ``trajectories`` is a sequence of (k, 3) arrays of preimputations.
    """
    _check(g)
    if res < 1 or arrows < 1:
        raise ValueError("grid sizes must be positive")
    cv = _Canvas(extent)
    if heatmap:
        _heatmap(cv, g, extent, res)
    if field:
        _field(cv, g, extent, arrows)
    if len(trajectories):
        _trajectories(cv, trajectories)
    total = SIZE + 2 * MARGIN
    lo, hi = cv.lo, cv.hi
    head = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" '
        '"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total}" '
        f'height="{total}" viewBox="0 0 {total} {total}">',
        f"<title>{escape(title or 'cohesion field')}</title>",
        f'<rect width="{total}" height="{total}" fill="white"/>',
    ]
    # clip so capped arrows and trajectories stay inside the frame
    body = [f'<clipPath id="frame"><rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" '
            f'height="{SIZE}"/></clipPath>', '<g clip-path="url(#frame)">', *cv.parts, "</g>"]
    tail = [
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" '
        'stroke="black"/>',
        f'<text x="{MARGIN}" y="{total - 12}" font-size="12" font-family="sans-serif">'
        f'{lo:g}</text>',
        f'<text x="{MARGIN + SIZE}" y="{total - 12}" font-size="12" text-anchor="end" '
        f'font-family="sans-serif">{hi:g}</text>',
        f'<text x="{MARGIN + SIZE / 2}" y="{total - 12}" font-size="12" text-anchor="middle" '
        'font-family="sans-serif">(1,-1,0)/sqrt2</text>',
        f'<text x="14" y="{MARGIN + SIZE / 2}" font-size="12" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 14 {MARGIN + SIZE / 2})">'
        '(1,1,-2)/sqrt6</text>',
        "</svg>",
    ]
    return "\n".join(head + body + tail) + "\n"
