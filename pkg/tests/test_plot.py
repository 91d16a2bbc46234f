import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cohesion.fields import dissatisfaction
from cohesion.flow import integrate_exact
from cohesion.plot import BASIS, PlotError, from_plane, heatmap_grid, render_svg, to_plane
from corpus import EXAMPLE_X, balanced_corpus, majority_game, example_game

SVG = "{http://www.w3.org/2000/svg}"


def test_basis_orthonormal_in_plane():
    np.testing.assert_allclose(BASIS.T @ BASIS, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(BASIS.sum(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(from_plane(to_plane(EXAMPLE_X)), EXAMPLE_X, atol=1e-13)


def test_heatmap_core_mask_per_pixel():
    g = example_game()
    pq, theta, core = heatmap_grid(g, res=60)
    assert core.any() and not core.all()
    for i in range(60):
        for j in range(60):
            x = from_plane(pq[i, j])
            e = g.proper_values - g.proper_indicators @ x
            assert core[i, j] == bool(np.all(e <= 0))
            assert theta[i, j] == pytest.approx(dissatisfaction(g, x), abs=1e-9)


def test_example_figure_document():
    g = example_game()
    tr = integrate_exact(g, EXAMPLE_X)
    svg = render_svg(g, trajectories=[tr.x], res=50, arrows=10)
    root = ET.fromstring(svg.split("\n", 2)[2])
    assert root.tag == SVG + "svg" and root.get("version") == "1.1"
    ids = {el.get("id") for el in root.iter() if el.get("id")}
    assert {"heatmap", "field", "trajectories"} <= ids
    assert len(list(root.iter(SVG + "polyline"))) == 1
    fills = [r.get("fill") for r in root.iter(SVG + "rect")]
    assert "#5b8fd6" in fills  # core shading


def test_heatmap_darker_far_from_core():
    g = example_game()
    _, theta, core = heatmap_grid(g, res=40)
    assert theta[0, 0] > theta[20, 20] and core[20, 20]


def test_arrows_point_inward():
    g = example_game()
    svg = render_svg(g, heatmap=False, arrows=8)
    root = ET.fromstring(svg.split("\n", 2)[2])
    centre = np.array([40 + 300, 40 + 300])
    lines = list(root.iter(SVG + "line"))
    assert lines
    for ln in lines:
        a = np.array([float(ln.get("x1")), float(ln.get("y1"))])
        b = np.array([float(ln.get("x2")), float(ln.get("y2"))])
        assert np.linalg.norm(b - centre) < np.linalg.norm(a - centre)


def test_empty_core_game_has_no_core_pixels():
    _, theta, core = heatmap_grid(majority_game(), res=50)
    assert not core.any() and theta.min() > 0


def test_rejects_other_player_counts():
    with pytest.raises(PlotError):
        render_svg(balanced_corpus()[1])
