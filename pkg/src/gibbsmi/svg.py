"""Minimal deterministic SVG output: line charts and grayscale image grids."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 12))
        v += step
    return ticks


def line_chart(
    series: dict[str, tuple],
    *,
    title: str = "",
    xlabel: str = "epoch",
    ylabel: str = "",
    width: int = 640,
    height: int = 400,
) -> str:
    """Render ``{label: (xs, ys)}`` as one polyline per series."""
    # right margin holds the legend
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs_all = np.concatenate([np.asarray(x, float) for x, _ in series.values()]) if series else np.zeros(1)
    ys_all = np.concatenate([np.asarray(y, float) for _, y in series.values()]) if series else np.zeros(1)
    ys_all = ys_all[np.isfinite(ys_all)]
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = (float(ys_all.min()), float(ys_all.max())) if ys_all.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2 - 75}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(sx(t))}" y1="{top + ph}" x2="{_fmt(sx(t))}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(t))}" y="{top + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{_fmt(sy(t))}" x2="{left}" y2="{_fmt(sy(t))}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(sy(t) + 4)}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>'
    )
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(
            f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys) if np.isfinite(y)
        )
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * k
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def image_grid(images: list[np.ndarray], captions: list[str], cell: int = 6) -> str:
    """Grayscale images side by side, each pixel a ``cell``-sized square."""
    side = images[0].shape[0]
    gap = 12
    w = len(images) * (side * cell + gap) + gap
    h = side * cell + 2 * gap + 16
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
    ]
    for k, (img, caption) in enumerate(zip(images, captions)):
        lo, hi = float(img.min()), float(img.max())
        scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
        ox = gap + k * (side * cell + gap)
        for r in range(side):
            for c in range(side):
                g = int(round(255 * scaled[r, c]))
                out.append(
                    f'<rect x="{ox + c * cell}" y="{gap + r * cell}" width="{cell}" height="{cell}" '
                    f'fill="rgb({g},{g},{g})"/>'
                )
        out.append(
            f'<text x="{ox + side * cell / 2}" y="{h - 8}" text-anchor="middle">{escape(caption)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, svg: str) -> None:
    Path(path).write_text(svg, encoding="utf-8")
