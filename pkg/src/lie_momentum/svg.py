"""Minimal SVG line plots, written as plain markup so no plotting library is needed."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    dashed: bool = False
    markers: bool = False


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 420
    series: list[Series] = field(default_factory=list)

    def add(self, x, y, label: str, dashed: bool = False, markers: bool = False) -> None:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        ok = np.isfinite(x) & np.isfinite(y)
        self.series.append(Series(x[ok], y[ok], label, dashed, markers))

    def _bounds(self):
        xs = [s.x for s in self.series if s.x.size]
        ys = [s.y for s in self.series if s.y.size]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = min(a.min() for a in xs), max(a.max() for a in xs)
        y0, y1 = min(a.min() for a in ys), max(a.max() for a in ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        W, H = self.width, self.height
        ml, mr, mt, mb = 70, 150, 40, 50
        pw, ph = W - ml - mr, H - mt - mb
        x0, x1, y0, y1 = self._bounds()
        sx = lambda v: ml + (v - x0) / (x1 - x0) * pw  # noqa: E731
        sy = lambda v: mt + ph - (v - y0) / (y1 - y0) * ph  # noqa: E731
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
               f'<rect width="{W}" height="{H}" fill="white"/>',
               f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
        for v in _ticks(x0, x1):
            X = sx(v)
            out.append(f'<line x1="{X:.1f}" y1="{mt + ph}" x2="{X:.1f}" y2="{mt + ph + 5}" stroke="#444"/>')
            out.append(f'<text x="{X:.1f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt(v)}</text>')
        for v in _ticks(y0, y1):
            Y = sy(v)
            out.append(f'<line x1="{ml - 5}" y1="{Y:.1f}" x2="{ml}" y2="{Y:.1f}" stroke="#444"/>')
            out.append(f'<line x1="{ml}" y1="{Y:.1f}" x2="{ml + pw}" y2="{Y:.1f}" stroke="#eee"/>')
            out.append(f'<text x="{ml - 8}" y="{Y + 4:.1f}" text-anchor="end">{_fmt(v)}</text>')
        for i, s in enumerate(self.series):
            color = PALETTE[i % len(PALETTE)]
            if s.x.size:
                pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(s.x, s.y))
                dash = ' stroke-dasharray="6,4"' if s.dashed else ""
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>')
                if s.markers:
                    out.extend(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="{color}"/>'
                               for a, b in zip(s.x, s.y))
            ly = mt + 14 + 18 * i
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"{dash}/>')
            out.append(f'<text x="{ml + pw + 35}" y="{ly}">{escape(s.label)}</text>')
        out.append(f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(self.title)}</text>')
        out.append(f'<text x="{ml + pw / 2:.0f}" y="{H - 10}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text transform="translate(16,{mt + ph / 2:.0f}) rotate(-90)" '
                   f'text-anchor="middle">{escape(self.ylabel)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}"
    return f"{v:g}"


def convergence_plot(traces: dict, title: str = "") -> str:
    """log10 suboptimality (dashed) and log10 Lyapunov (solid) against iteration."""
    fig = Figure(title=title, xlabel="iteration", ylabel="log10 value")
    for label, tr in traces.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            fig.add(tr.k, np.log10(tr.subopt), f"{label} U-U*", dashed=True)
            if np.any(np.isfinite(tr.lyapunov)):
                fig.add(tr.k, np.log10(tr.lyapunov), f"{label} Lyapunov")
    return fig.render()


def rate_plot(fits: dict, title: str = "") -> str:
    """log10(1 - c) against log10 kappa with the fitted lines."""
    fig = Figure(title=title, xlabel="log10 kappa", ylabel="log10 (1 - c)")
    for scheme, fit in fits.items():
        x = np.log10(fit.kappas)
        fig.add(x, np.log10(1.0 - fit.rates), f"{scheme}", markers=True)
        fig.add(x, fit.slope * x + fit.intercept, f"fit {fit.slope:.2f}", dashed=True)
    return fig.render()
