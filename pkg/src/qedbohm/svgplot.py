"""Minimal self-contained SVG line/histogram plots (no plotting dependency).

Deterministic output: same data, same bytes.  Only what the CLI needs:
multi-series line panels and a histogram-vs-density overlay.
"""

from __future__ import annotations

import math

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

_W, _H = 720, 420
_ML, _MR, _MT, _MB = 70, 20, 34, 52


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.2e}"
    return f"{v:.6g}"


class _Frame:
    def __init__(self, xlim, ylim, title, xlabel, ylabel):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts: list[str] = []
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="Helvetica,Arial,sans-serif">'
        )
        self.parts.append(f'<rect width="{_W}" height="{_H}" fill="white"/>')
        self.parts.append(
            f'<text x="{_W/2:.1f}" y="20" text-anchor="middle" font-size="15">{title}</text>'
        )
        # axes box
        self.parts.append(
            f'<rect x="{_ML}" y="{_MT}" width="{_W-_ML-_MR}" height="{_H-_MT-_MB}" '
            'fill="none" stroke="black" stroke-width="1"/>'
        )
        for tx in _ticks(self.x0, self.x1):
            px = self.px(tx)
            self.parts.append(
                f'<line x1="{px:.1f}" y1="{_H-_MB}" x2="{px:.1f}" y2="{_H-_MB+5}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{px:.1f}" y="{_H-_MB+18}" text-anchor="middle" font-size="11">{_fmt(tx)}</text>'
            )
        for ty in _ticks(self.y0, self.y1):
            py = self.py(ty)
            self.parts.append(
                f'<line x1="{_ML-5}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{_ML-8}" y="{py+4:.1f}" text-anchor="end" font-size="11">{_fmt(ty)}</text>'
            )
        self.parts.append(
            f'<text x="{(_ML+_W-_MR)/2:.1f}" y="{_H-14}" text-anchor="middle" font-size="13">{xlabel}</text>'
        )
        self.parts.append(
            f'<text x="18" y="{(_MT+_H-_MB)/2:.1f}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 18 {(_MT+_H-_MB)/2:.1f})">{ylabel}</text>'
        )

    def px(self, x: float) -> float:
        return _ML + (x - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def py(self, y: float) -> float:
        return _H - _MB - (y - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)

    def polyline(self, xs, ys, color: str, label_slot: int | None, label: str | None) -> None:
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        if label is not None and label_slot is not None:
            lx, ly = _W - _MR - 150, _MT + 16 + 16 * label_slot
            self.parts.append(
                f'<line x1="{lx}" y1="{ly-4}" x2="{lx+24}" y2="{ly-4}" stroke="{color}" stroke-width="2"/>'
            )
            self.parts.append(f'<text x="{lx+30}" y="{ly}" font-size="12">{label}</text>')

    def bars(self, edges, heights, color: str) -> None:
        for left, right, h in zip(edges[:-1], edges[1:], heights):
            x, w = self.px(left), self.px(right) - self.px(left)
            y = self.py(h)
            hgt = self.py(0.0) - y
            if hgt <= 0:
                continue
            self.parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{hgt:.2f}" '
                f'fill="{color}" fill-opacity="0.45" stroke="none"/>'
            )

    def render(self) -> str:
        return "\n".join(self.parts) + "\n</svg>\n"


def line_plot(path, xs, series: list[tuple[str, list[float]]], title: str, xlabel: str, ylabel: str) -> None:
    """Write a multi-series line panel; series is a list of (label, ys)."""
    ymin = min(min(ys) for _, ys in series)
    ymax = max(max(ys) for _, ys in series)
    pad = 0.05 * (ymax - ymin if ymax > ymin else abs(ymax) + 1.0)
    frame = _Frame((min(xs), max(xs)), (ymin - pad, ymax + pad), title, xlabel, ylabel)
    for i, (label, ys) in enumerate(series):
        frame.polyline(xs, ys, _PALETTE[i % len(_PALETTE)], i, label)
    with open(path, "w") as fh:
        fh.write(frame.render())


def histogram_overlay(path, edges, empirical, analytic_x, analytic_y, title: str, xlabel: str) -> None:
    """Histogram bars plus a density curve, for equivariance panels."""
    ymax = max(max(empirical, default=0.0), max(analytic_y, default=0.0))
    frame = _Frame(
        (min(edges), max(edges)), (0.0, 1.1 * ymax if ymax > 0 else 1.0), title, xlabel, "density"
    )
    frame.bars(edges, empirical, _PALETTE[0])
    frame.polyline(analytic_x, analytic_y, "black", 0, "|Phi|^2 marginal")
    with open(path, "w") as fh:
        fh.write(frame.render())
