"""Minimal deterministic SVG charts.

Static figures only: fixed palette, fixed layout, coordinates rounded to
hundredths so identical data produces identical bytes. The generator
comment is the single metadata line allowed to change between versions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

GENERATOR_LINE = "<!-- generator: beamobs svg writer -->"

_PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2",
]

_W, _H = 720.0, 440.0
_ML, _MR, _MT, _MB = 72.0, 24.0, 40.0, 56.0


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _finite_range(values, log: bool):
    arr = np.concatenate([np.asarray(v, dtype=float).ravel() for v in values])
    arr = arr[np.isfinite(arr)]
    if log:
        arr = arr[arr > 0.0]
    if arr.size == 0:
        return 1.0, 10.0
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        pad = abs(lo) * 0.1 + 1e-12
        return lo - pad, hi + pad
    return lo, hi


class _Frame:
    """Maps data coordinates onto the fixed plot rectangle."""

    def __init__(self, xlim, ylim, logy: bool):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.logy = logy
        if logy:
            self.y0, self.y1 = np.log10(self.y0), np.log10(self.y1)

    def x(self, v):
        return _ML + (v - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def y(self, v):
        v = np.log10(v) if self.logy else v
        return _H - _MB - (v - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)


def _axes(frame: _Frame, xlabel: str, ylabel: str, title: str, y_ticks: bool = True) -> list[str]:
    parts = [
        f'<rect x="{_fmt(_ML)}" y="{_fmt(_MT)}" width="{_fmt(_W - _ML - _MR)}"'
        f' height="{_fmt(_H - _MT - _MB)}" fill="none" stroke="#333333" stroke-width="1"/>',
        f'<text x="{_fmt(_W / 2)}" y="24" text-anchor="middle" font-size="15"'
        f' font-family="sans-serif">{title}</text>',
        f'<text x="{_fmt(_W / 2)}" y="{_fmt(_H - 12)}" text-anchor="middle"'
        f' font-size="13" font-family="sans-serif">{xlabel}</text>',
        f'<text x="16" y="{_fmt(_H / 2)}" text-anchor="middle" font-size="13"'
        f' font-family="sans-serif" transform="rotate(-90 16 {_fmt(_H / 2)})">{ylabel}</text>',
    ]
    for frac in np.linspace(0.0, 1.0, 6):
        xv = frame.x0 + frac * (frame.x1 - frame.x0)
        xp = frame.x(xv)
        parts.append(
            f'<line x1="{_fmt(xp)}" y1="{_fmt(_H - _MB)}" x2="{_fmt(xp)}"'
            f' y2="{_fmt(_H - _MB + 5)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(xp)}" y="{_fmt(_H - _MB + 20)}" text-anchor="middle"'
            f' font-size="11" font-family="sans-serif">{_tick_label(xv)}</text>'
        )
    if not y_ticks:
        return parts
    if frame.logy:
        decades = range(int(np.floor(frame.y0)), int(np.ceil(frame.y1)) + 1)
        tick_values = [10.0**d for d in decades if frame.y0 <= d <= frame.y1]
    else:
        tick_values = list(np.linspace(frame.y0, frame.y1, 6))
    for tv in tick_values:
        yp = frame.y(tv) if frame.logy else _H - _MB - (tv - frame.y0) / (
            frame.y1 - frame.y0
        ) * (_H - _MT - _MB)
        label = f"1e{int(np.log10(tv))}" if frame.logy else _tick_label(tv)
        parts.append(
            f'<line x1="{_fmt(_ML - 5)}" y1="{_fmt(yp)}" x2="{_fmt(_ML)}"'
            f' y2="{_fmt(yp)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(_ML - 8)}" y="{_fmt(yp + 4)}" text-anchor="end"'
            f' font-size="11" font-family="sans-serif">{label}</text>'
        )
    return parts


def _document(parts: list[str]) -> str:
    body = "\n".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(_W)}" height="{int(_H)}"'
        f' viewBox="0 0 {int(_W)} {int(_H)}">\n{GENERATOR_LINE}\n'
        f'<rect width="{int(_W)}" height="{int(_H)}" fill="#ffffff"/>\n{body}\n</svg>\n'
    )


def line_chart(path, x, series, title="", xlabel="", ylabel="", logy=False) -> None:
    """Write a multi-series line chart. ``series`` is [(label, y-array), ...].

    Non-finite samples (and non-positive ones on a log axis) break the line
    rather than being interpolated over.
    """
    x = np.asarray(x, dtype=float)
    xlim = _finite_range([x], log=False)
    ylim = _finite_range([y for _, y in series], log=logy)
    frame = _Frame(xlim, ylim, logy)
    parts = _axes(frame, xlabel, ylabel, title)
    for idx, (label, y) in enumerate(series):
        y = np.asarray(y, dtype=float)
        color = _PALETTE[idx % len(_PALETTE)]
        ok = np.isfinite(y) & (y > 0.0 if logy else np.ones_like(y, dtype=bool))
        segment: list[str] = []
        for k in range(len(x)):
            if ok[k]:
                segment.append(f"{_fmt(frame.x(x[k]))},{_fmt(frame.y(y[k]))}")
            elif segment:
                parts.append(
                    f'<polyline points="{" ".join(segment)}" fill="none"'
                    f' stroke="{color}" stroke-width="1.5"/>'
                )
                segment = []
        if segment:
            parts.append(
                f'<polyline points="{" ".join(segment)}" fill="none"'
                f' stroke="{color}" stroke-width="1.5"/>'
            )
        ly = _MT + 16 + 16 * idx
        parts.append(
            f'<line x1="{_fmt(_W - _MR - 120)}" y1="{_fmt(ly - 4)}"'
            f' x2="{_fmt(_W - _MR - 96)}" y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_fmt(_W - _MR - 90)}" y="{_fmt(ly)}" font-size="11"'
            f' font-family="sans-serif">{label}</text>'
        )
    Path(path).write_text(_document(parts))


def strip_chart(path, rows, xlim, title="", xlabel="", ylabel="") -> None:
    """Dot-strip chart: one horizontal row of markers per (label, xs) entry."""
    labels = [str(label) for label, _ in rows]
    n_rows = len(rows)
    frame = _Frame(xlim, (0.0, float(n_rows + 1)), logy=False)
    parts = _axes(frame, xlabel, ylabel, title, y_ticks=False)
    for idx, (label, xs) in enumerate(rows):
        yp = frame.y(float(n_rows - idx))
        parts.append(
            f'<text x="{_fmt(_ML - 8)}" y="{_fmt(yp + 4)}" text-anchor="end"'
            f' font-size="10" font-family="sans-serif">{labels[idx]}</text>'
        )
        for xv in np.asarray(xs, dtype=float):
            parts.append(
                f'<circle cx="{_fmt(frame.x(xv))}" cy="{_fmt(yp)}" r="3.2"'
                f' fill="{_PALETTE[idx % len(_PALETTE)]}" fill-opacity="0.75"/>'
            )
    Path(path).write_text(_document(parts))
