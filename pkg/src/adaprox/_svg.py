"""Minimal self-contained SVG line charts (no external renderer)."""

from __future__ import annotations

import math
from typing import Sequence

_WIDTH, _HEIGHT = 760, 520
_MARGIN = 70
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float) -> list[float]:
    start = math.floor(lo)
    stop = math.ceil(hi)
    step = max(1, (stop - start) // 6)
    return [float(t) for t in range(start, stop + 1, step)]


def line_chart(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    xlabel: str,
    ylabel: str,
    title: str,
    log_x: bool = True,
    log_y: bool = True,
) -> str:
    """Render named (x, y) polylines on (optionally) log-scaled axes.

    Nonpositive values are dropped on log axes; returns the SVG document text.
    """
    cleaned = []
    for name, xs, ys in series:
        pts = [
            (x, y)
            for x, y in zip(xs, ys)
            if (not log_x or x > 0) and (not log_y or y > 0)
        ]
        if pts:
            cleaned.append((name, pts))
    if not cleaned:
        cleaned = [("empty", [(1.0, 1.0)])]

    def tx(v: float) -> float:
        return math.log10(v) if log_x else v

    def ty(v: float) -> float:
        return math.log10(v) if log_y else v

    x_vals = [tx(x) for _, pts in cleaned for x, _ in pts]
    y_vals = [ty(y) for _, pts in cleaned for _, y in pts]
    x_lo, x_hi = min(x_vals), max(x_vals)
    y_lo, y_hi = min(y_vals), max(y_vals)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN

    def px(v: float) -> float:
        return _MARGIN + (tx(v) - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return _HEIGHT - _MARGIN - (ty(v) - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444"/>',
        f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 18}" text-anchor="middle">{xlabel}</text>',
        f'<text x="20" y="{_HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 20 {_HEIGHT / 2})">{ylabel}</text>',
    ]

    if log_x:
        for t in _ticks(x_lo, x_hi):
            if x_lo <= t <= x_hi:
                x = _MARGIN + (t - x_lo) / (x_hi - x_lo) * plot_w
                parts.append(
                    f'<line x1="{x:.1f}" y1="{_MARGIN}" x2="{x:.1f}" '
                    f'y2="{_HEIGHT - _MARGIN}" stroke="#ddd"/>'
                )
                parts.append(
                    f'<text x="{x:.1f}" y="{_HEIGHT - _MARGIN + 16}" '
                    f'text-anchor="middle">1e{int(t)}</text>'
                )
    if log_y:
        for t in _ticks(y_lo, y_hi):
            if y_lo <= t <= y_hi:
                ypix = _HEIGHT - _MARGIN - (t - y_lo) / (y_hi - y_lo) * plot_h
                parts.append(
                    f'<line x1="{_MARGIN}" y1="{ypix:.1f}" x2="{_WIDTH - _MARGIN}" '
                    f'y2="{ypix:.1f}" stroke="#ddd"/>'
                )
                parts.append(
                    f'<text x="{_MARGIN - 6}" y="{ypix + 4:.1f}" '
                    f'text-anchor="end">1e{int(t)}</text>'
                )

    for i, (name, pts) in enumerate(cleaned):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        legend_y = _MARGIN + 16 + 16 * i
        parts.append(
            f'<line x1="{_WIDTH - _MARGIN - 150}" y1="{legend_y - 4}" '
            f'x2="{_WIDTH - _MARGIN - 126}" y2="{legend_y - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{_WIDTH - _MARGIN - 120}" y="{legend_y}">{name}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
