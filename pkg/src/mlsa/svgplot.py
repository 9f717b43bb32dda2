"""Minimal SVG scatter writer; CSV stays the authoritative artifact."""
from __future__ import annotations

import math
from pathlib import Path

_WIDTH, _HEIGHT = 640, 480
_MARGIN = 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_MARKS = ("circle", "square", "diamond", "triangle", "circle", "square")


def _transform(v: float, lo: float, hi: float, pix_lo: float, pix_hi: float,
               log_scale: bool) -> float:
    if log_scale:
        v, lo, hi = math.log10(v), math.log10(lo), math.log10(hi)
    if hi == lo:
        return 0.5 * (pix_lo + pix_hi)
    return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo)


def _marker(shape: str, x: float, y: float, color: str) -> str:
    if shape == "square":
        return (f'<rect x="{x - 4:.1f}" y="{y - 4:.1f}" width="8" height="8" '
                f'fill="{color}"/>')
    if shape == "diamond":
        pts = f"{x:.1f},{y - 5:.1f} {x + 5:.1f},{y:.1f} {x:.1f},{y + 5:.1f} {x - 5:.1f},{y:.1f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    if shape == "triangle":
        pts = f"{x:.1f},{y - 5:.1f} {x + 5:.1f},{y + 4:.1f} {x - 5:.1f},{y + 4:.1f}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    return f'<circle cx="{x:.1f}" cy="{y:.1f}" r="4" fill="{color}"/>'


def write_scatter_svg(
    path: str | Path,
    series: dict[str, list[tuple[float, float]]],
    *,
    log_x: bool = False,
    log_y: bool = False,
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
) -> None:
    """Write one scatter plot with one color/marker per named series."""
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    if not xs:
        raise ValueError("nothing to plot")
    if (log_x and min(xs) <= 0) or (log_y and min(ys) <= 0):
        raise ValueError("log-scaled values must be positive")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="30" text-anchor="middle" '
            f'font-size="16">{title}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 15}" text-anchor="middle" '
            f'font-size="13">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="18" y="{_HEIGHT / 2}" text-anchor="middle" '
            f'font-size="13" transform="rotate(-90 18 {_HEIGHT / 2})">{ylabel}</text>'
        )
    for idx, (name, pts) in enumerate(series.items()):
        color = _COLORS[idx % len(_COLORS)]
        shape = _MARKS[idx % len(_MARKS)]
        for vx, vy in pts:
            px = _transform(vx, x_lo, x_hi, _MARGIN, _WIDTH - _MARGIN, log_x)
            py = _transform(vy, y_lo, y_hi, _HEIGHT - _MARGIN, _MARGIN, log_y)
            parts.append(_marker(shape, px, py, color))
        ly = _MARGIN + 18 * (idx + 1)
        parts.append(_marker(shape, _WIDTH - _MARGIN - 110, ly - 4, color))
        parts.append(
            f'<text x="{_WIDTH - _MARGIN - 98}" y="{ly}" font-size="12">{name}</text>'
        )
    axis_note = []
    if log_x:
        axis_note.append("log x")
    if log_y:
        axis_note.append("log y")
    if axis_note:
        parts.append(
            f'<text x="{_MARGIN}" y="{_MARGIN - 8}" font-size="11" '
            f'fill="#666">{", ".join(axis_note)}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts), encoding="utf-8")
