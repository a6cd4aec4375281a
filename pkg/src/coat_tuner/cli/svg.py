"""Standalone SVG output: line charts and 2-D sample heatmaps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def line_chart(series: Sequence[tuple[str, Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "", ylabel: str = "", width: int = 800, height: int = 500) -> str:
    """Line chart of ``(label, xs, ys)`` series with a legend."""
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if np.isfinite(y)]
    x0, x1 = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y0, y1 = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{left - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
        out.append(f'<line x1="{left}" x2="{left + pw}" y1="{py(t):.1f}" y2="{py(t):.1f}" stroke="#ddd"/>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>')
    for k, (label, xs, ys) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys) if np.isfinite(y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + 10}" x2="{left + 30}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + 36}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class HeatmapLayout:
    """Affine map from physical parameter coordinates to pixels.

    Dimension 0 runs left to right and dimension 1 bottom to top.
    """

    lo: tuple[float, float]
    hi: tuple[float, float]
    size: int = 800
    margin: int = 60

    @property
    def plot(self) -> float:
        return self.size - 2 * self.margin

    def to_pixel(self, p) -> tuple[float, float]:
        fx = (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) if self.hi[0] > self.lo[0] else 0.5
        fy = (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) if self.hi[1] > self.lo[1] else 0.5
        return self.margin + fx * self.plot, self.margin + (1 - fy) * self.plot


def _color(t: float) -> str:
    """Blue (low) to yellow (high) ramp."""
    stops = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], float)
    t = min(max(t, 0.0), 1.0) * (len(stops) - 1)
    i = min(int(t), len(stops) - 2)
    c = stops[i] + (stops[i + 1] - stops[i]) * (t - i)
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def heatmap(values: np.ndarray, layout: HeatmapLayout, samples: Sequence[tuple[float, float]] = (),
            seed: tuple[float, float] | None = None, best: tuple[float, float] | None = None,
            feasible: np.ndarray | None = None, title: str = "", labels: tuple[str, str] = ("theta_0", "theta_1")) -> str:
    """Heatmap of ``values`` (shape ``(n0, n1)``) with the sample trajectory.

    ``feasible`` (same shape, boolean) draws the boundary between feasible
    and infeasible cells as the constraint contour.
    """
    n0, n1 = values.shape
    s = layout.size
    cw, ch = layout.plot / n0, layout.plot / n1
    vmin, vmax = float(np.min(values)), float(np.max(values))
    span = vmax - vmin if vmax > vmin else 1.0
    x_edges = layout.margin + cw * np.arange(n0 + 1)
    y_edges = layout.margin + layout.plot - ch * np.arange(n1 + 1)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{s}" height="{s}" fill="white"/>',
           f'<text x="{s / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
           '<g shape-rendering="crispEdges">']
    for i in range(n0):
        for j in range(n1):
            out.append(f'<rect x="{x_edges[i]:.2f}" y="{y_edges[j + 1]:.2f}" width="{cw + 0.05:.2f}" '
                       f'height="{ch + 0.05:.2f}" fill="{_color((values[i, j] - vmin) / span)}"/>')
    out.append("</g>")
    if feasible is not None:
        segs = []
        for i in range(n0):
            for j in range(n1):
                if i + 1 < n0 and feasible[i, j] != feasible[i + 1, j]:
                    segs.append(f"M{x_edges[i + 1]:.2f},{y_edges[j]:.2f}V{y_edges[j + 1]:.2f}")
                if j + 1 < n1 and feasible[i, j] != feasible[i, j + 1]:
                    segs.append(f"M{x_edges[i]:.2f},{y_edges[j + 1]:.2f}H{x_edges[i + 1]:.2f}")
        if segs:
            out.append(f'<path class="tau-contour" d="{"".join(segs)}" fill="none" stroke="white" '
                       f'stroke-width="2" stroke-dasharray="4 3"/>')
    pts = [layout.to_pixel(p) for p in samples]
    if len(pts) > 1:
        poly = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        out.append(f'<polyline class="trajectory" points="{poly}" fill="none" stroke="#e8e8e8" stroke-width="1.2"/>')
    for x, y in pts:
        out.append(f'<circle class="sample" cx="{x:.2f}" cy="{y:.2f}" r="3" fill="#ff5050" stroke="black" stroke-width="0.5"/>')
    if seed is not None:
        x, y = layout.to_pixel(seed)
        out.append(f'<rect class="seed" x="{x - 6:.2f}" y="{y - 6:.2f}" width="12" height="12" fill="none" '
                   f'stroke="white" stroke-width="2.5"/>')
    if best is not None:
        x, y = layout.to_pixel(best)
        out.append(f'<path class="best" d="M{x:.2f},{y - 9:.2f}L{x + 8:.2f},{y + 6:.2f}L{x - 8:.2f},{y + 6:.2f}Z" '
                   f'fill="#ffd700" stroke="black" stroke-width="1"/>')
    m, p = layout.margin, layout.plot
    out.append(f'<rect x="{m}" y="{m}" width="{p}" height="{p}" fill="none" stroke="#333"/>')
    for t in _ticks(layout.lo[0], layout.hi[0]):
        x, _ = layout.to_pixel((t, layout.lo[1]))
        out.append(f'<text x="{x:.1f}" y="{m + p + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(layout.lo[1], layout.hi[1]):
        _, y = layout.to_pixel((layout.lo[0], t))
        out.append(f'<text x="{m - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{m + p / 2}" y="{s - 14}" text-anchor="middle">{escape(labels[0])}</text>')
    out.append(f'<text x="18" y="{m + p / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {m + p / 2})">{escape(labels[1])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
