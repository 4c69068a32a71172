"""Static SVG charts. Output is a pure function of the input numbers."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
W, H = 720, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 50, 60


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-format-version="1">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{LEFT}" y="28" font-family="sans-serif" font-size="16" font-weight="bold">{escape(title)}</text>',
    ]


def line_chart(
    series: Mapping[str, Sequence[tuple[float, float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    path: str | Path,
    ylim: tuple[float, float] = (0.0, 1.0),
) -> Path:
    """Multi-series line chart; series are drawn in sorted-name order."""
    plot_w = W - LEFT - RIGHT
    plot_h = H - TOP - BOTTOM
    xs = sorted({x for pts in series.values() for x, _ in pts}) or [0.0, 1.0]
    x0, x1 = xs[0], xs[-1] if xs[-1] != xs[0] else xs[0] + 1
    y0, y1 = ylim

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * plot_w

    def py(y):
        return TOP + plot_h - (min(max(y, y0), y1) - y0) / (y1 - y0) * plot_h

    parts = _header(title)
    for k in range(6):
        yv = y0 + (y1 - y0) * k / 5
        parts.append(f'<line x1="{LEFT}" y1="{py(yv):.2f}" x2="{LEFT + plot_w}" y2="{py(yv):.2f}" stroke="#e5e5e5"/>')
        parts.append(f'<text x="{LEFT - 8}" y="{py(yv) + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{yv:.2f}</text>')
    for x in xs:
        label = f"{x:g}"
        parts.append(f'<text x="{px(x):.2f}" y="{TOP + plot_h + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>')
    parts.append(f'<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>')
    parts.append(f'<text x="{LEFT + plot_w / 2:.2f}" y="{H - 18}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    parts.append(f'<text x="18" y="{TOP + plot_h / 2:.2f}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {TOP + plot_h / 2:.2f})">{escape(ylabel)}</text>')
    for n, name in enumerate(sorted(series)):
        color = PALETTE[n % len(PALETTE)]
        pts = sorted(series[name])
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        ly = TOP + 14 + n * 18
        parts.append(f'<line x1="{W - RIGHT + 14}" y1="{ly - 4}" x2="{W - RIGHT + 34}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{W - RIGHT + 40}" y="{ly}" font-family="sans-serif" font-size="11">{escape(name)}</text>')
    parts.append("</svg>")
    return _write(parts, path)


def heatmap(
    grid: np.ndarray,
    title: str,
    xlabel: str,
    ylabel: str,
    path: str | Path,
) -> Path:
    """Heatmap with ``grid[x, y]``: x runs along the horizontal axis."""
    grid = np.asarray(grid, dtype=float)
    nx, ny = grid.shape
    plot_w = W - LEFT - RIGHT
    plot_h = H - TOP - BOTTOM
    cw, ch = plot_w / nx, plot_h / ny
    lo, hi = float(np.nanmin(grid)), float(np.nanmax(grid))
    span = hi - lo if hi > lo else 1.0
    parts = _header(title)
    for x in range(nx):
        for y in range(ny):
            v = grid[x, y]
            t = 0.0 if np.isnan(v) else (v - lo) / span
            shade = int(round(255 - 200 * t))
            fill = f"#{shade:02x}{shade:02x}ff"
            rx, ry = LEFT + x * cw, TOP + y * ch
            parts.append(f'<rect x="{rx:.2f}" y="{ry:.2f}" width="{cw:.2f}" height="{ch:.2f}" fill="{fill}" stroke="#ffffff"/>')
            parts.append(f'<text x="{rx + cw / 2:.2f}" y="{ry + ch / 2 + 4:.2f}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:.2f}</text>')
    for x in range(nx):
        parts.append(f'<text x="{LEFT + (x + 0.5) * cw:.2f}" y="{TOP + plot_h + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{x}</text>')
    for y in range(ny):
        parts.append(f'<text x="{LEFT - 8}" y="{TOP + (y + 0.5) * ch + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{y}</text>')
    parts.append(f'<text x="{LEFT + plot_w / 2:.2f}" y="{H - 18}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    parts.append(f'<text x="18" y="{TOP + plot_h / 2:.2f}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {TOP + plot_h / 2:.2f})">{escape(ylabel)}</text>')
    parts.append("</svg>")
    return _write(parts, path)


def _write(parts: list[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
