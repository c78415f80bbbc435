"""Standalone SVG heatmaps of phase diagrams.

Layout: ``a`` on the vertical axis (increasing upward), ``b`` on the
horizontal axis, one rectangle per grid cell. Cell edges sit halfway between
neighbouring grid points.

Colour maps (piecewise-linear in RGB between the listed stops):

* rates: the transformed success rate ``v = 10^(-3(1-x))`` in ``[0, 1]`` is
  mapped through ``SEQUENTIAL_STOPS`` (dark purple at 0 to yellow at 1);
* differences: ``d`` in ``[-1, 1]`` is mapped through ``DIVERGING_STOPS``
  (purple at -1, light grey ``#f7f7f7`` at 0, orange at +1).

The threshold overlay is a red (``#ff0000``) polyline through ``(b, 1 + 2b)``
restricted to the part of the line inside the grid's bounding box.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .experiments import GridResult, GridSpec, success_transform

SEQUENTIAL_STOPS = ((0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
                    (0.75, (94, 201, 98)), (1.0, (253, 231, 37)))
DIVERGING_STOPS = ((-1.0, (94, 60, 153)), (-0.5, (178, 171, 210)), (0.0, (247, 247, 247)),
                   (0.5, (253, 184, 99)), (1.0, (230, 97, 1)))
THRESHOLD_COLOR = "#ff0000"

_LEFT, _TOP, _PLOT, _RIGHT, _BOTTOM = 70, 40, 480, 110, 60


def _interp(stops, x: float) -> str:
    lo_x, lo_c = stops[0]
    if x <= lo_x:
        return "#%02x%02x%02x" % lo_c
    for hi_x, hi_c in stops[1:]:
        if x <= hi_x:
            w = (x - lo_x) / (hi_x - lo_x)
            rgb = tuple(int(round(a + w * (b - a))) for a, b in zip(lo_c, hi_c))
            return "#%02x%02x%02x" % rgb
        lo_x, lo_c = hi_x, hi_c
    return "#%02x%02x%02x" % stops[-1][1]


def sequential_color(v: float) -> str:
    return _interp(SEQUENTIAL_STOPS, float(v))


def diverging_color(d: float) -> str:
    return _interp(DIVERGING_STOPS, float(d))


def _edges(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 1:
        return np.array([pts[0] - 0.5, pts[0] + 0.5])
    mids = 0.5 * (pts[1:] + pts[:-1])
    return np.concatenate([[pts[0] - (mids[0] - pts[0])], mids, [pts[-1] + (pts[-1] - mids[-1])]])


def threshold_points(a_grid, b_grid) -> list[tuple[float, float]]:
    """``(b, a)`` vertices of ``a = 1 + 2b`` clipped to ``[b_min, b_max] x [a_min, a_max]``."""
    a_lo, a_hi = min(a_grid), max(a_grid)
    b_lo = max(min(b_grid), (a_lo - 1.0) / 2.0)
    b_hi = min(max(b_grid), (a_hi - 1.0) / 2.0)
    if b_lo > b_hi:
        return []
    bs = [b_lo] + [b for b in sorted(b_grid) if b_lo < b < b_hi] + [b_hi]
    if b_hi == b_lo:
        bs = [b_lo]
    return [(b, 1.0 + 2.0 * b) for b in bs]


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def render_heatmap_svg(values, a_grid, b_grid, path=None, *, diverging: bool = False,
                       overlay_threshold: bool = True, title: str = "") -> str:
    """Render ``values[i, j]`` (row ``i`` for ``a_grid[i]``, column ``j`` for ``b_grid[j]``).

    Rates are expected already transformed into ``[0, 1]``; with ``diverging``
    the values are differences in ``[-1, 1]``. Returns the SVG text and writes
    it to ``path`` when given.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(a_grid), len(b_grid)):
        raise ValueError(f"values of shape {values.shape} do not match a {len(a_grid)} x b {len(b_grid)} grid")
    color = diverging_color if diverging else sequential_color
    a_edges, b_edges = _edges(a_grid), _edges(b_grid)

    def sx(b):
        return _LEFT + _PLOT * (b - b_edges[0]) / (b_edges[-1] - b_edges[0])

    def sy(a):
        return _TOP + _PLOT * (a_edges[-1] - a) / (a_edges[-1] - a_edges[0])

    width = _LEFT + _PLOT + _RIGHT
    height = _TOP + _PLOT + _BOTTOM
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{_LEFT + _PLOT / 2}" y="24" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="14">{escape(title)}</text>')
    out.append('<g class="cells" shape-rendering="crispEdges">')
    for i in range(len(a_grid)):
        y0, y1 = sy(a_edges[i + 1]), sy(a_edges[i])
        for j in range(len(b_grid)):
            x0, x1 = sx(b_edges[j]), sx(b_edges[j + 1])
            out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
                       f'height="{_fmt(y1 - y0)}" fill="{color(values[i, j])}" '
                       f'data-a="{_fmt(a_grid[i])}" data-b="{_fmt(b_grid[j])}" '
                       f'data-value="{float(values[i, j])!r}"/>')
    out.append("</g>")

    if overlay_threshold:
        pts = threshold_points(a_grid, b_grid)
        if pts:
            coords = " ".join(f"{_fmt(sx(b))},{_fmt(sy(a))}" for b, a in pts)
            out.append(f'<polyline class="threshold" points="{coords}" fill="none" '
                       f'stroke="{THRESHOLD_COLOR}" stroke-width="2" '
                       f'data-a-start="{float(pts[0][1])!r}" data-a-end="{float(pts[-1][1])!r}"/>')

    # axes
    x_axis_y = _TOP + _PLOT
    out.append(f'<line x1="{_LEFT}" y1="{x_axis_y}" x2="{_LEFT + _PLOT}" y2="{x_axis_y}" stroke="#000000"/>')
    out.append(f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{x_axis_y}" stroke="#000000"/>')
    for b in _ticks(b_grid):
        x = _fmt(sx(b))
        out.append(f'<line x1="{x}" y1="{x_axis_y}" x2="{x}" y2="{x_axis_y + 5}" stroke="#000000"/>')
        out.append(f'<text x="{x}" y="{x_axis_y + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{_fmt(b)}</text>')
    for a in _ticks(a_grid):
        y = _fmt(sy(a))
        out.append(f'<line x1="{_LEFT - 5}" y1="{y}" x2="{_LEFT}" y2="{y}" stroke="#000000"/>')
        out.append(f'<text x="{_LEFT - 8}" y="{y}" text-anchor="end" dominant-baseline="middle" '
                   f'font-family="sans-serif" font-size="11">{_fmt(a)}</text>')
    out.append(f'<text class="axis-label" x="{_LEFT + _PLOT / 2}" y="{height - 15}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="14">b</text>')
    out.append(f'<text class="axis-label" x="20" y="{_TOP + _PLOT / 2}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="14">a</text>')

    # colour bar
    lo, hi = (-1.0, 1.0) if diverging else (0.0, 1.0)
    bar_x, steps = _LEFT + _PLOT + 30, 50
    for k in range(steps):
        v = hi - (hi - lo) * (k + 0.5) / steps
        out.append(f'<rect x="{bar_x}" y="{_fmt(_TOP + _PLOT * k / steps)}" width="20" '
                   f'height="{_fmt(_PLOT / steps + 0.5)}" fill="{color(v)}"/>')
    for v, y in ((hi, _TOP), (lo, _TOP + _PLOT)):
        out.append(f'<text x="{bar_x + 26}" y="{y}" dominant-baseline="middle" font-family="sans-serif" '
                   f'font-size="11">{_fmt(v)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _ticks(grid, count: int = 6) -> list[float]:
    if len(grid) <= count:
        return list(grid)
    idx = np.unique(np.round(np.linspace(0, len(grid) - 1, count)).astype(int))
    return [grid[k] for k in idx]


def render_grid_svg(result: GridResult, method: str, path=None, overlay_threshold: bool = True) -> str:
    """Heatmap of the transformed success rate of one method."""
    rates = result.success_matrix(method)
    shown = np.vectorize(success_transform)(rates)
    spec = result.spec
    return render_heatmap_svg(shown, spec.a_grid, spec.b_grid, path, overlay_threshold=overlay_threshold,
                              title=f"{method}: transformed success rate, n={spec.n}")


def render_diff_svg(diff, spec: GridSpec, method_a: str, method_b: str, path=None,
                    overlay_threshold: bool = True) -> str:
    return render_heatmap_svg(diff, spec.a_grid, spec.b_grid, path, diverging=True,
                              overlay_threshold=overlay_threshold,
                              title=f"success({method_a}) - success({method_b}), n={spec.n}")
