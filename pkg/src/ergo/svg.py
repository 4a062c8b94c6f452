"""Minimal SVG line plots: axes, polylines, dashed reference lines, legend."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class Series:
    label: str
    xs: list[float]
    ys: list[float]


@dataclass
class HLine:
    label: str
    y: float


@dataclass
class LinePlot:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    hlines: list[HLine] = field(default_factory=list)
    width: int = 640
    height: int = 420

    def _ranges(self):
        xs = [x for s in self.series for x in s.xs if math.isfinite(x)]
        ys = [y for s in self.series for y in s.ys if math.isfinite(y)]
        ys += [h.y for h in self.hlines if math.isfinite(h.y)]
        x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
        y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            pad = abs(y0) * 0.05 or 0.5
            y0, y1 = y0 - pad, y1 + pad
        pad = (y1 - y0) * 0.05
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        W, H = self.width, self.height
        left, right, top, bottom = 70, 170, 40, 50
        pw, ph = W - left - right, H - top - bottom
        x0, x1, y0, y1 = self._ranges()

        def px(x):
            return left + (x - x0) / (x1 - x0) * pw

        def py(y):
            return top + ph - (y - y0) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(self.title)}</text>',
            f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
            f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        ]
        for i in range(5):
            xv = x0 + (x1 - x0) * i / 4
            yv = y0 + (y1 - y0) * i / 4
            out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="11">{xv:.3g}</text>')
            out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" font-size="11">{yv:.4g}</text>')
        out.append(f'<text x="{left + pw / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(self.xlabel)}</text>')
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(self.ylabel)}</text>'
        )
        legend_y = top + 10
        for k, s in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys) if math.isfinite(y))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
            for x, y in zip(s.xs, s.ys):
                if math.isfinite(y):
                    out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
            out.append(f'<line x1="{left + pw + 10}" y1="{legend_y}" x2="{left + pw + 30}" y2="{legend_y}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{left + pw + 35}" y="{legend_y + 4}" font-size="11">{escape(s.label)}</text>')
            legend_y += 16
        for k, h in enumerate(self.hlines):
            color = PALETTE[(len(self.series) + k) % len(PALETTE)]
            out.append(
                f'<line x1="{left}" y1="{py(h.y):.2f}" x2="{left + pw}" y2="{py(h.y):.2f}" '
                f'stroke="{color}" stroke-dasharray="6,4"/>'
            )
            out.append(f'<line x1="{left + pw + 10}" y1="{legend_y}" x2="{left + pw + 30}" y2="{legend_y}" stroke="{color}" stroke-dasharray="6,4"/>')
            out.append(f'<text x="{left + pw + 35}" y="{legend_y + 4}" font-size="11">{escape(h.label)}</text>')
            legend_y += 16
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
