import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sharpgmm.experiments import GridSpec, diff_grids, run_grid
from sharpgmm.svg import (DIVERGING_STOPS, SEQUENTIAL_STOPS, diverging_color, render_diff_svg,
                          render_grid_svg, render_heatmap_svg, sequential_color, threshold_points)

NS = {"s": "http://www.w3.org/2000/svg"}


def cells(svg):
    return ET.fromstring(svg).findall("s:g[@class='cells']/s:rect", NS)


def luminance(hex_color):
    r, g, b = (int(hex_color[k:k + 2], 16) for k in (1, 3, 5))
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


def test_sequential_map_is_monotone():
    lum = [luminance(sequential_color(v)) for v in np.linspace(0, 1, 101)]
    assert all(b >= a for a, b in zip(lum, lum[1:]))
    assert sequential_color(0.0) == "#%02x%02x%02x" % SEQUENTIAL_STOPS[0][1]
    assert sequential_color(1.0) == "#%02x%02x%02x" % SEQUENTIAL_STOPS[-1][1]


def test_diverging_midpoint():
    assert diverging_color(0.0) == "#f7f7f7"
    assert diverging_color(-1.0) == "#%02x%02x%02x" % DIVERGING_STOPS[0][1]
    assert diverging_color(2.0) == diverging_color(1.0)


def test_uniform_grid_single_fill():
    svg = render_heatmap_svg(np.full((4, 3), 0.7), (1, 2, 3, 4), (0.1, 0.2, 0.3))
    fills = {r.get("fill") for r in cells(svg)}
    assert len(cells(svg)) == 12 and len(fills) == 1


def test_self_diff_is_midpoint_color():
    spec = GridSpec(n=16, sigma=1.0, a_grid=(1.5, 5.0), b_grid=(0.2, 1.0, 2.0), reps=2)
    result = run_grid(spec)
    svg = render_diff_svg(diff_grids(result, "spectral", "spectral"), spec, "spectral", "spectral")
    assert {r.get("fill") for r in cells(svg)} == {"#f7f7f7"}


def test_threshold_endpoints_on_default_grid():
    a_grid = tuple(np.linspace(1.1, 11, 15))
    b_grid = tuple(np.linspace(0.1, 5, 15))
    pts = threshold_points(a_grid, b_grid)
    assert pts[0][1] == pytest.approx(1.2) and pts[-1][1] == pytest.approx(11.0)
    svg = render_heatmap_svg(np.zeros((15, 15)), a_grid, b_grid)
    line = ET.fromstring(svg).find("s:polyline[@class='threshold']", NS)
    assert line.get("stroke") == "#ff0000"
    assert float(line.get("data-a-start")) == pytest.approx(1.2)
    assert float(line.get("data-a-end")) == pytest.approx(11.0)


def test_threshold_clipping():
    # a range [1, 3] cuts the line at b = 1
    pts = threshold_points((1.0, 3.0), (0.5, 4.0))
    assert pts[0] == (0.5, 2.0) and pts[-1] == (1.0, 3.0)
    assert threshold_points((1.0, 1.5), (2.0, 3.0)) == []
    svg = render_heatmap_svg(np.zeros((2, 2)), (1.0, 1.5), (2.0, 3.0))
    assert "polyline" not in svg
    assert "polyline" not in render_heatmap_svg(np.zeros((2, 2)), (1, 9), (0.5, 1), overlay_threshold=False)


def test_axes_and_well_formed(tmp_path):
    spec = GridSpec(n=16, sigma=1.0, a_grid=(1.5, 5.0), b_grid=(0.2, 1.0), reps=2, methods=("spectral",))
    path = tmp_path / "h.svg"
    render_grid_svg(run_grid(spec), "spectral", path)
    root = ET.parse(path).getroot()
    labels = [t.text for t in root.findall("s:text[@class='axis-label']", NS)]
    assert labels == ["b", "a"]


def test_higher_a_drawn_higher():
    svg = render_heatmap_svg(np.array([[0.0], [1.0]]), (1.0, 2.0), (0.5,), overlay_threshold=False)
    low, high = cells(svg)
    assert float(high.get("y")) < float(low.get("y"))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        render_heatmap_svg(np.zeros((2, 2)), (1, 2, 3), (1, 2))


def test_title_is_escaped():
    svg = render_heatmap_svg(np.zeros((1, 1)), (1,), (1,), title="a < b & c")
    ET.fromstring(svg)
    assert re.search(r"a &lt; b &amp; c", svg)
