"""Minimal SVG 1.1 plot writer: line charts and scatter charts.

Kept dependency-free on purpose; the output is plain markup with axes,
tick labels, and a legend.  Good enough for diagnostic curves and
two-coordinate scatters, not a general plotting layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .errors import ContractError

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)

MARGIN_LEFT = 62
MARGIN_RIGHT = 16
MARGIN_TOP = 34
MARGIN_BOTTOM = 46


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def _nice_ticks(lo: float, hi: float, target: int = 6):
    """Round tick positions at a 1/2/5 mantissa covering [lo, hi]."""
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


def _fmt(value: float) -> str:
    text = f"{value:.6g}"
    return "0" if text in ("-0", "-0.0") else text


class _Frame:
    """Maps data coordinates onto the pixel viewport of one chart."""

    def __init__(self, width, height, x_range, y_range):
        self.width = width
        self.height = height
        self.x_lo, self.x_hi = x_range
        self.y_lo, self.y_hi = y_range
        if self.x_hi <= self.x_lo:
            self.x_hi = self.x_lo + 1.0
        if self.y_hi <= self.y_lo:
            self.y_hi = self.y_lo + 1.0
        self.plot_w = width - MARGIN_LEFT - MARGIN_RIGHT
        self.plot_h = height - MARGIN_TOP - MARGIN_BOTTOM

    def px(self, x):
        return MARGIN_LEFT + (x - self.x_lo) / (self.x_hi - self.x_lo) * self.plot_w

    def py(self, y):
        return MARGIN_TOP + self.plot_h - (y - self.y_lo) / (self.y_hi - self.y_lo) * self.plot_h


def _chart_header(frame, title, xlabel, ylabel):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{frame.width}" height="{frame.height}" '
        f'viewBox="0 0 {frame.width} {frame.height}">',
        f'<rect width="{frame.width}" height="{frame.height}" fill="white"/>',
        f'<text x="{frame.width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14" fill="#222">{escape(title)}</text>',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{frame.plot_w}" '
        f'height="{frame.plot_h}" fill="none" stroke="#444" stroke-width="1"/>',
    ]
    for t in _nice_ticks(frame.x_lo, frame.x_hi):
        x = frame.px(t)
        y0 = MARGIN_TOP + frame.plot_h
        parts.append(
            f'<line x1="{x:.1f}" y1="{y0}" x2="{x:.1f}" y2="{y0 + 4}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{y0 + 17}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10" fill="#333">{_fmt(t)}</text>'
        )
    for t in _nice_ticks(frame.y_lo, frame.y_hi):
        y = frame.py(t)
        parts.append(
            f'<line x1="{MARGIN_LEFT - 4}" y1="{y:.1f}" x2="{MARGIN_LEFT}" y2="{y:.1f}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{MARGIN_LEFT - 7}" y="{y + 3:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10" fill="#333">{_fmt(t)}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + frame.plot_w / 2:.1f}" y="{frame.height - 8}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="11" '
        f'fill="#222">{escape(xlabel)}</text>'
    )
    parts.append(
        f'<text x="14" y="{MARGIN_TOP + frame.plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" fill="#222" '
        f'transform="rotate(-90 14 {MARGIN_TOP + frame.plot_h / 2:.1f})">{escape(ylabel)}</text>'
    )
    return parts


def _legend(parts, frame, labels):
    x = MARGIN_LEFT + 10
    y = MARGIN_TOP + 12
    for i, label in enumerate(labels):
        color = PALETTE[i % len(PALETTE)]
        parts.append(
            f'<line x1="{x}" y1="{y - 4}" x2="{x + 18}" y2="{y - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{x + 24}" y="{y}" font-family="sans-serif" font-size="11" '
            f'fill="#222">{escape(label)}</text>'
        )
        y += 16


def _data_range(series_list, attr):
    lo = min(float(np.min(getattr(s, attr))) for s in series_list)
    hi = max(float(np.max(getattr(s, attr))) for s in series_list)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def _validate(series_list):
    series = [
        Series(label=s.label, x=np.asarray(s.x, float), y=np.asarray(s.y, float))
        if not isinstance(s, Series) else s
        for s in series_list
    ]
    if not series:
        raise ContractError("plot: no series given")
    for s in series:
        if len(np.asarray(s.x)) != len(np.asarray(s.y)):
            raise ContractError(f"plot series {s.label!r}: x/y length mismatch")
    return series


def line_plot(series_list, path, title="", xlabel="", ylabel="",
              width=640, height=440):
    """Write a multi-series polyline chart to ``path``."""
    series = _validate(series_list)
    frame = _Frame(width, height, _data_range(series, "x"), _data_range(series, "y"))
    parts = _chart_header(frame, title, xlabel, ylabel)
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(
            f"{frame.px(float(xv)):.2f},{frame.py(float(yv)):.2f}"
            for xv, yv in zip(np.asarray(s.x, float), np.asarray(s.y, float))
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
    _legend(parts, frame, [s.label for s in series])
    parts.append("</svg>")
    _write(path, parts)


def scatter_plot(series_list, path, title="", xlabel="", ylabel="",
                 width=520, height=520, radius=2.0, markers=None):
    """Write a multi-series scatter chart; ``markers`` adds cross symbols.

    ``markers`` is an optional iterable of (x, y) positions drawn as black
    crosses on top of the point clouds (used for reference locations).
    """
    series = _validate(series_list)
    frame = _Frame(width, height, _data_range(series, "x"), _data_range(series, "y"))
    parts = _chart_header(frame, title, xlabel, ylabel)
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        for xv, yv in zip(np.asarray(s.x, float), np.asarray(s.y, float)):
            parts.append(
                f'<circle cx="{frame.px(float(xv)):.2f}" cy="{frame.py(float(yv)):.2f}" '
                f'r="{radius}" fill="{color}" fill-opacity="0.45"/>'
            )
    if markers is not None:
        for mx, my in markers:
            x, y = frame.px(float(mx)), frame.py(float(my))
            parts.append(
                f'<path d="M {x - 5:.1f} {y:.1f} H {x + 5:.1f} M {x:.1f} {y - 5:.1f} '
                f'V {y + 5:.1f}" stroke="black" stroke-width="1.6"/>'
            )
    _legend(parts, frame, [s.label for s in series])
    parts.append("</svg>")
    _write(path, parts)


def _write(path, parts):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
