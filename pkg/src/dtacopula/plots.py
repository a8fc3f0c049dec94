"""Deterministic SVG forest and trace plots.

Coordinates are written with fixed precision and no timestamps or random
ids, so the same inputs always give byte-identical files.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .summaries import FitSummary, exact_ci

WIDTH, HEIGHT = 960, 720
CHAIN_COLOURS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")
OBSERVED = "#c51b8a"
POSTERIOR = "#2b6cb0"


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Svg:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
            f"<title>{escape(title)}</title>",
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, stroke="black", width=1.0, cls=None):
        c = f' class="{cls}"' if cls else ""
        self.parts.append(
            f'<line{c} x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{width:g}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", weight=None):
        w = f' font-weight="{weight}"' if weight else ""
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}"{w}>{escape(str(s))}</text>'
        )

    def circle(self, x, y, r, fill, cls=None):
        c = f' class="{cls}"' if cls else ""
        self.parts.append(f'<circle{c} cx="{_f(x)}" cy="{_f(y)}" r="{r:g}" fill="{fill}"/>')

    def polygon(self, pts, fill, cls=None):
        c = f' class="{cls}"' if cls else ""
        p = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(f'<polygon{c} points="{p}" fill="{fill}"/>')

    def polyline(self, pts, stroke, cls=None, width=0.8):
        c = f' class="{cls}"' if cls else ""
        p = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(f'<polyline{c} points="{p}" fill="none" stroke="{stroke}" stroke-width="{width:g}"/>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _star(x, y, r):
    pts = []
    for j in range(10):
        rad = r if j % 2 == 0 else r * 0.45
        ang = -np.pi / 2 + j * np.pi / 5
        pts.append((x + rad * np.cos(ang), y + rad * np.sin(ang)))
    return pts


def forest_svg(summary: FitSummary) -> str:
    """Sensitivity and specificity panels: one row per study plus pooled rows.

    Each study row shows the observed proportion with its exact 95%
    interval and the posterior study-level mean with its credible interval.
    """
    svg = _Svg(f"Forest plot: {summary.model} ({summary.dataset})")
    studies = summary.studies
    pooled = {
        "se": [p for p in summary.params if p.name.startswith("MUse")],
        "sp": [p for p in summary.params if p.name.startswith("MUsp")],
    }
    n_rows = len(studies) + max(len(pooled["se"]), 1)
    top, bottom = 70.0, HEIGHT - 60.0
    step = (bottom - top) / (n_rows + 1)
    label_w = 120.0
    panels = (("se", "Sensitivity", label_w + 20.0), ("sp", "Specificity", label_w + 20.0 + (WIDTH - label_w - 40.0) / 2))
    panel_w = (WIDTH - label_w - 40.0) / 2 - 30.0

    svg.text(WIDTH / 2, 30, f"{summary.model} model, {summary.dataset or 'data'}", size=16, anchor="middle", weight="bold")
    for i, s in enumerate(studies):
        svg.text(label_w, top + (i + 1) * step + 4, s.study_id, anchor="end")
    for j, p in enumerate(pooled["se"]):
        cell = p.name[p.name.index("[") + 1:-1]
        label = "Pooled" if cell == "1" else f"Pooled {cell}"
        svg.text(label_w, top + (len(studies) + j + 1) * step + 4, label, anchor="end", weight="bold")

    for key, title, x0 in panels:
        def sx(v, x0=x0):
            return x0 + float(v) * panel_w

        svg.text(x0 + panel_w / 2, top - 20, title, size=13, anchor="middle", weight="bold")
        svg.line(x0, bottom, x0 + panel_w, bottom)
        for t in np.linspace(0.0, 1.0, 6):
            svg.line(sx(t), bottom, sx(t), bottom + 5)
            svg.line(sx(t), top, sx(t), bottom, stroke="#e5e5e5", width=0.5)
            svg.text(sx(t), bottom + 18, f"{t:.1f}", anchor="middle")
        for i, s in enumerate(studies):
            y = top + (i + 1) * step
            if key == "se":
                k, n, m, lo, hi = s.tp, s.n_diseased, s.sens_mean, s.sens_lower, s.sens_upper
            else:
                k, n, m, lo, hi = s.tn, s.n_healthy, s.spec_mean, s.spec_lower, s.spec_upper
            olo, ohi = exact_ci(k, n)
            svg.line(sx(olo), y - 4, sx(ohi), y - 4, stroke="#8c8c8c", width=4, cls="observed-ci")
            svg.circle(sx(k / n), y - 4, 3.5, OBSERVED, cls="observed")
            svg.line(sx(lo), y + 4, sx(hi), y + 4, stroke="black", width=1.2, cls="posterior-ci")
            svg.polygon(_star(sx(m), y + 4, 5.0), POSTERIOR, cls="posterior")
        for j, p in enumerate(pooled[key]):
            y = top + (len(studies) + j + 1) * step
            svg.line(sx(p.lower), y, sx(p.upper), y, stroke="black", width=1.5, cls="pooled-ci")
            svg.polygon([(sx(p.mean), y - 6), (sx(p.mean) + 6, y), (sx(p.mean), y + 6), (sx(p.mean) - 6, y)],
                        "black", cls="pooled")
    return svg.render()


def trace_svg(series: dict, title: str = "Trace plot") -> str:
    """One panel per parameter, one polyline per chain.

    ``series`` maps parameter name to an (m chains x N draws) array.
    """
    svg = _Svg(title)
    names = list(series)
    if not names:
        raise ValueError("no parameters to plot")
    svg.text(WIDTH / 2, 24, title, size=15, anchor="middle", weight="bold")
    left, right, top = 90.0, WIDTH - 20.0, 40.0
    gap = 18.0
    h = (HEIGHT - top - 30.0 - gap * (len(names) - 1)) / len(names)
    for r, name in enumerate(names):
        x = np.asarray(series[name], dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        y0 = top + r * (h + gap)
        lo, hi = float(x.min()), float(x.max())
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        svg.line(left, y0 + h, right, y0 + h, stroke="#999999", width=0.6)
        svg.line(left, y0, left, y0 + h, stroke="#999999", width=0.6)
        svg.text(left - 6, y0 + 10, f"{hi:.3f}", size=9, anchor="end")
        svg.text(left - 6, y0 + h, f"{lo:.3f}", size=9, anchor="end")
        svg.text(left - 6, y0 + h / 2 + 4, name, size=11, anchor="end", weight="bold")
        n = x.shape[1]
        xs = left + (right - left) * (np.arange(n) / max(n - 1, 1))
        for c in range(x.shape[0]):
            ys = y0 + h - (x[c] - lo) / (hi - lo) * h
            svg.polyline(list(zip(xs, ys)), CHAIN_COLOURS[c % len(CHAIN_COLOURS)], cls=f"chain-{c + 1}")
    return svg.render()
