"""Tiny dependency-free SVG line/scatter plots for run artifacts.

Every plot written by the CLI has a CSV twin with the same numbers; these
figures are conveniences, deterministic byte-for-byte for identical inputs.
"""
from __future__ import annotations

import math

import numpy as np

_PALETTE = ["#1f6fb4", "#d1495b", "#2e8b57", "#8d5a97", "#c77d2a", "#3b3b3b"]


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / max(n - 1, 1)))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    x = start
    while x <= hi + 1e-12 * span:
        out.append(round(x, 12))
        x += step
    return out


def line_plot(
    path,
    series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
    width: int = 640,
    height: int = 420,
    markers: bool = False,
) -> None:
    """Write an SVG line plot.

    series: list of (label, x_array, y_array); nonpositive y values are
    dropped in log mode.
    """
    ml, mr, mt, mb = 64, 16, 28, 46
    pw, ph = width - ml - mr, height - mt - mb
    clean = []
    for label, x, y in series:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        keep = np.isfinite(x) & np.isfinite(y)
        if logy:
            keep &= y > 0
        if np.any(keep):
            clean.append((label, x[keep], np.log10(y[keep]) if logy else y[keep]))
    if not clean:
        clean = [("empty", np.array([0.0, 1.0]), np.array([0.0, 0.0]))]
    xlo = min(float(np.min(x)) for _, x, _ in clean)
    xhi = max(float(np.max(x)) for _, x, _ in clean)
    ylo = min(float(np.min(y)) for _, _, y in clean)
    yhi = max(float(np.max(y)) for _, _, y in clean)
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + 1.0
    pad = 0.04 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def sx(v):
        return ml + pw * (v - xlo) / (xhi - xlo)

    def sy(v):
        return mt + ph * (1.0 - (v - ylo) / (yhi - ylo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="Helvetica,Arial,sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#777"/>',
    ]
    for tx in _ticks(xlo, xhi):
        px = sx(tx)
        parts.append(f'<line x1="{px:.1f}" y1="{mt+ph}" x2="{px:.1f}" y2="{mt+ph+4}" stroke="#777"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{mt+ph+17}" text-anchor="middle">{tx:g}</text>'
        )
    for ty in _ticks(ylo, yhi):
        py = sy(ty)
        label = f"1e{ty:g}" if logy else f"{ty:g}"
        parts.append(f'<line x1="{ml-4}" y1="{py:.1f}" x2="{ml}" y2="{py:.1f}" stroke="#777"/>')
        parts.append(
            f'<text x="{ml-7}" y="{py+4:.1f}" text-anchor="end">{label}</text>'
        )
        parts.append(
            f'<line x1="{ml}" y1="{py:.1f}" x2="{ml+pw}" y2="{py:.1f}" stroke="#eee"/>'
        )
    for i, (label, x, y) in enumerate(clean):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        if markers:
            for a, b in zip(x, y):
                parts.append(
                    f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2.4" fill="{color}"/>'
                )
        parts.append(
            f'<text x="{ml+10}" y="{mt+16+15*i}" fill="{color}">{label}</text>'
        )
    if title:
        parts.append(
            f'<text x="{width/2:.0f}" y="{mt-9}" text-anchor="middle" font-size="14">{title}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{ml+pw/2:.0f}" y="{height-8}" text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="14" y="{mt+ph/2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {mt+ph/2:.0f})">{ylabel}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def scatter_plot(path, series, **kwargs) -> None:
    line_plot(path, series, markers=True, **kwargs)
