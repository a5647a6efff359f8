"""Standalone SVG line charts for OPM series, plus the series CSV format."""

from __future__ import annotations

import csv
import math
import os
from typing import IO, Mapping, Sequence
from xml.sax.saxutils import escape

from lexishift.counts import LemmaPosKey
from lexishift.trends import format_float

SERIES_HEADER = ["lemma", "upos", "slice", "opm"]

# Tableau-10, cycled for more than ten series.
PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)

WIDTH, HEIGHT = 800, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 180, 40, 50


def _nice_step(span: float, target_ticks: int = 5) -> float:
    raw = span / target_ticks
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            return mult * mag
    return 10 * mag


def y_axis(max_value: float) -> tuple[float, float, list[float]]:
    """Axis from 0 to a round number at or above ``max_value``, with tick values."""
    if max_value <= 0:
        max_value = 1.0
    step = _nice_step(max_value)
    top = step * math.ceil(max_value / step)
    if top < max_value:
        top += step
    ticks = [round(i * step, 10) for i in range(int(round(top / step)) + 1)]
    return 0.0, top, ticks


def _num(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _tick_label(x: float) -> str:
    return f"{x:g}"


def render_series_svg(
    series: Mapping[str, Sequence[tuple[int, float]]],
    out: str | os.PathLike | IO[str] | None = None,
    *,
    title: str | None = None,
    y_label: str = "Occurrences per million",
) -> str:
    """Draw one polyline per named series; returns the SVG text and writes it to ``out``.

    Every series must cover the same slices in the same order.
    """
    if not series:
        raise ValueError("need at least one series")
    names = list(series)
    first = [s for s, _ in series[names[0]]]
    for name in names:
        xs = [s for s, _ in series[name]]
        if len(xs) != len(first):
            raise ValueError(f"series {name!r} has {len(xs)} points, expected {len(first)}")
        if xs != first:
            raise ValueError(f"series {name!r} covers different slices")
    if not first:
        raise ValueError("series are empty")

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B
    x_min, x_max = first[0], first[-1]
    x_span = (x_max - x_min) or 1
    y_max_data = max(v for name in names for _, v in series[name])
    y_lo, y_hi, y_ticks = y_axis(y_max_data)

    def px(s: float) -> float:
        if x_max == x_min:
            return MARGIN_L + plot_w / 2
        return MARGIN_L + (s - x_min) / x_span * plot_w

    def py(v: float) -> float:
        return MARGIN_T + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH / 2:g}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')

    # axes
    x0, y0 = MARGIN_L, MARGIN_T + plot_h
    parts.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line class="axis" x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for v in y_ticks:
        y = _num(py(v))
        parts.append(f'<line x1="{x0 - 4}" y1="{y}" x2="{x0 + plot_w}" y2="{y}" stroke="#dddddd"/>')
        parts.append(f'<text class="ytick" x="{x0 - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">'
                     f'{_tick_label(v)}</text>')
    x_step = max(1, math.ceil(len(first) / 10))
    for s in first[::x_step]:
        x = _num(px(s))
        parts.append(f'<line x1="{x}" y1="{y0}" x2="{x}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(f'<text class="xtick" x="{x}" y="{y0 + 18}" text-anchor="middle">{s}</text>')
    parts.append(f'<text x="{x0 + plot_w / 2:g}" y="{HEIGHT - 8}" text-anchor="middle">Year</text>')
    parts.append(f'<text x="16" y="{MARGIN_T + plot_h / 2:g}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2:g})">{escape(y_label)}</text>')

    # lines and legend
    legend_x = WIDTH - MARGIN_R + 16
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{_num(px(s))},{_num(py(v))}" for s, v in series[name])
        parts.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" stroke="{color}" '
                     f'stroke-width="2" points="{points}"/>')
        ly = MARGIN_T + 10 + i * 20
        parts.append(f'<g class="legend-entry"><line x1="{legend_x}" y1="{ly}" x2="{legend_x + 20}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>'
                     f'<text x="{legend_x + 26}" y="{ly}" dominant-baseline="middle">{escape(name)}</text></g>')
    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if out is not None:
        if isinstance(out, (str, os.PathLike)):
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(svg)
        else:
            out.write(svg)
    return svg


def write_series_csv(series: Mapping[LemmaPosKey, Sequence[tuple[int, float]]], out: str | os.PathLike | IO[str]) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_series_csv(series, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SERIES_HEADER)
    for key, points in series.items():
        for s, v in points:
            w.writerow([key.lemma, key.upos, s, format_float(v)])
