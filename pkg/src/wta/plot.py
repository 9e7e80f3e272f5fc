"""Self-contained SVG rendering for step curves and power studies.

Output is deterministic text (fixed coordinate precision, no timestamps) so
plots can be diffed and checked byte for byte.
"""

from __future__ import annotations

import math
from html import escape
from typing import Iterable, Sequence

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
GLYPHS = ("wye", "tick")

WIDTH, PLOT_H = 720, 400
LEFT, RIGHT, TOP = 70, 30, 40


def _f(x: float) -> str:
    return f"{x:.2f}"


def nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + step * 1e-9:
        if v >= lo - step * 1e-9:
            ticks.append(round(v, 10))
        v += step
    return ticks


class _Canvas:
    def __init__(self, x_range, y_range, extra_height=0, width=WIDTH):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.width = width
        self.height = TOP + PLOT_H + 50 + extra_height
        self.parts: list[str] = []

    def sx(self, x):
        span = (self.x1 - self.x0) or 1
        return LEFT + (x - self.x0) / span * (self.width - LEFT - RIGHT)

    def sy(self, y):
        span = (self.y1 - self.y0) or 1
        return TOP + (self.y1 - y) / span * PLOT_H

    def add(self, s: str):
        self.parts.append(s)

    def text(self, x, y, s, anchor="middle", size=12, color="#000"):
        self.add(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'fill="{color}" font-family="sans-serif">{escape(str(s))}</text>'
        )

    def axes(self, xlabel, ylabel, title, xticks, yticks):
        bottom = TOP + PLOT_H
        self.add(f'<rect x="{LEFT}" y="{TOP}" width="{self.width - LEFT - RIGHT}" '
                 f'height="{PLOT_H}" fill="none" stroke="#000"/>')
        for t in xticks:
            x = self.sx(t)
            self.add(f'<line x1="{_f(x)}" y1="{bottom}" x2="{_f(x)}" y2="{bottom + 5}" stroke="#000"/>')
            self.text(x, bottom + 18, _label(t))
        for t in yticks:
            y = self.sy(t)
            self.add(f'<line x1="{LEFT - 5}" y1="{_f(y)}" x2="{LEFT}" y2="{_f(y)}" stroke="#000"/>')
            self.add(f'<line x1="{LEFT}" y1="{_f(y)}" x2="{self.width - RIGHT}" y2="{_f(y)}" '
                     'stroke="#ddd" stroke-width="0.5"/>')
            self.text(LEFT - 8, y + 4, _label(t), anchor="end")
        self.text((LEFT + self.width - RIGHT) / 2, bottom + 36, xlabel)
        self.add(f'<text x="18" y="{_f(TOP + PLOT_H / 2)}" font-size="12" text-anchor="middle" '
                 f'font-family="sans-serif" transform="rotate(-90 18 {_f(TOP + PLOT_H / 2)})">'
                 f'{escape(ylabel)}</text>')
        self.text(self.width / 2, 22, title, size=14)

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>',
                          *self.parts, "</svg>"]) + "\n"


def _label(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:g}"


def _glyph(canvas: _Canvas, x: float, y: float, color: str, glyph: str, size=5.0):
    cx, cy = canvas.sx(x), canvas.sy(y)
    if glyph == "tick":
        canvas.add(f'<line x1="{_f(cx)}" y1="{_f(cy - size)}" x2="{_f(cx)}" '
                   f'y2="{_f(cy + size)}" stroke="{color}" class="censor-tick"/>')
        return
    # wye: two arms up from the centre and a stem down
    canvas.add(
        f'<path d="M{_f(cx - size)} {_f(cy - size)} L{_f(cx)} {_f(cy)} '
        f'L{_f(cx + size)} {_f(cy - size)} M{_f(cx)} {_f(cy)} L{_f(cx)} {_f(cy + size)}" '
        f'fill="none" stroke="{color}" class="censor-wye"/>'
    )


def step_chart(
    series: Sequence[dict],
    *,
    title: str,
    xlabel: str,
    ylabel: str,
    glyph: str = "wye",
    y_range: tuple[float, float] | None = None,
    at_risk_ticks: int = 6,
) -> str:
    """Staircase chart with censor glyphs and an at-risk table below.

    Each series is a dict with ``label``, ``times`` and ``values`` (the value
    holds from each time to the next), ``marks`` as (time, count) pairs and an
    ``at_risk`` callable giving the number still followed at a time.
    """
    if glyph not in GLYPHS:
        raise ValueError(f"glyph must be one of {GLYPHS}")
    x_max = max((max(s["times"], default=0) for s in series), default=1) or 1
    if y_range is None:
        vals = [v for s in series for v in s["values"]]
        lo, hi = min(vals + [0.0]), max(vals + [1.0])
        y_range = (lo, hi)
    xticks = nice_ticks(0, x_max, at_risk_ticks)
    xticks = [t for t in xticks if t <= x_max]
    canvas = _Canvas((0, x_max), y_range, extra_height=30 + 18 * len(series))
    canvas.axes(xlabel, ylabel, title, xticks, nice_ticks(*y_range))

    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        times, values = list(s["times"]), list(s["values"])
        if not times:
            continue
        pts = [f"M{_f(canvas.sx(times[0]))} {_f(canvas.sy(values[0]))}"]
        for i in range(1, len(times)):
            pts.append(f"H{_f(canvas.sx(times[i]))}")
            pts.append(f"V{_f(canvas.sy(values[i]))}")
        end = s.get("end", times[-1])
        pts.append(f"H{_f(canvas.sx(end))}")
        canvas.add(f'<path d="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for t, _count in s.get("marks", ()):
            _glyph(canvas, t, _value_at(times, values, t), color, glyph)
        ly = TOP + 14 + 16 * k
        canvas.add(f'<line x1="{WIDTH - RIGHT - 110}" y1="{ly - 4}" x2="{WIDTH - RIGHT - 90}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        canvas.text(WIDTH - RIGHT - 85, ly, s["label"], anchor="start")

    base = TOP + PLOT_H + 62
    canvas.text(LEFT - 20, base, "At risk", anchor="end", size=11)
    for k, s in enumerate(series):
        y = base + 18 * (k + 1)
        color = PALETTE[k % len(PALETTE)]
        canvas.text(LEFT - 20, y, s["label"], anchor="end", size=11, color=color)
        for t in xticks:
            canvas.text(canvas.sx(t), y, s["at_risk"](t), size=11, color=color)
    return canvas.render()


def _value_at(times, values, t):
    v = values[0]
    for ti, vi in zip(times, values):
        if ti > t:
            break
        v = vi
    return v


def wta_svg(curves: dict, glyph: str = "wye", time_unit: str = "days",
            title: str = "Weighted trajectory analysis") -> str:
    series = []
    for label, c in curves.items():
        at = {s.time: s.at_risk for s in c.steps}
        series.append({
            "label": f"arm {label}",
            "times": [s.time for s in c.steps],
            "values": [s.u for s in c.steps],
            "marks": c.censor_marks,
            "at_risk": lambda t, at=at: at.get(int(t), 0),
        })
    return step_chart(series, title=title, xlabel=f"Time ({time_unit})",
                      ylabel="Weighted health status", glyph=glyph)


def km_svg(curves: dict, glyph: str = "wye", time_unit: str = "days",
           title: str = "Kaplan-Meier estimate") -> str:
    series = []
    for label, c in curves.items():
        exits = {}
        for s in c.steps:
            exits[s.time] = exits.get(s.time, 0) + s.events
        for t, cnt in c.censor_marks:
            exits[t] = exits.get(t, 0) + cnt
        last = max(exits, default=0)

        def at_risk(t, exits=exits, n=c.n_patients):
            return n - sum(v for k, v in exits.items() if k < t)

        series.append({
            "label": f"arm {label}",
            "times": [0] + [s.time for s in c.steps],
            "values": [1.0] + [s.survival for s in c.steps],
            "marks": c.censor_marks,
            "end": last,
            "at_risk": at_risk,
        })
    return step_chart(series, title=title, xlabel=f"Time ({time_unit})",
                      ylabel="Survival probability", glyph=glyph, y_range=(0.0, 1.0))


def power_svg(cells: Iterable) -> str:
    """Power against sample size, one panel per hazard ratio, one line per method."""
    cells = list(cells)
    hrs = sorted({c.hr for c in cells})
    methods = list(dict.fromkeys(c.method for c in cells))
    ns = sorted({c.n for c in cells})
    panel_w = 300
    width = LEFT + RIGHT + panel_w * max(len(hrs), 1)
    height = TOP + PLOT_H + 60 + 18 * len(methods)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">', '<rect width="100%" height="100%" fill="#fff"/>']
    x_lo, x_hi = (min(ns), max(ns)) if ns else (0, 1)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1

    def sy(p):
        return TOP + (1 - p) * PLOT_H

    for i, hr in enumerate(hrs):
        ox = LEFT + i * panel_w

        def sx(n, ox=ox):
            return ox + 10 + (n - x_lo) / (x_hi - x_lo) * (panel_w - 30)

        parts.append(f'<rect x="{ox}" y="{TOP}" width="{panel_w - 10}" height="{PLOT_H}" '
                     'fill="none" stroke="#000"/>')
        parts.append(f'<text x="{_f(ox + panel_w / 2)}" y="{TOP - 8}" font-size="13" '
                     f'text-anchor="middle" font-family="sans-serif">HR = {hr:g}</text>')
        for p in (0.0, 0.05, 0.2, 0.4, 0.6, 0.8, 1.0):
            dash = ' stroke-dasharray="4 3"' if p in (0.05, 0.8) else ""
            parts.append(f'<line x1="{ox}" y1="{_f(sy(p))}" x2="{ox + panel_w - 10}" '
                         f'y2="{_f(sy(p))}" stroke="#ccc"{dash}/>')
            if i == 0:
                parts.append(f'<text x="{ox - 6}" y="{_f(sy(p) + 4)}" font-size="11" '
                             f'text-anchor="end" font-family="sans-serif">{p:g}</text>')
        for n in ns:
            parts.append(f'<text x="{_f(sx(n))}" y="{TOP + PLOT_H + 16}" font-size="10" '
                         f'text-anchor="middle" font-family="sans-serif">{n}</text>')
        for k, method in enumerate(methods):
            color = PALETTE[k % len(PALETTE)]
            pts = sorted((c.n, c.power) for c in cells if c.hr == hr and c.method == method)
            if not pts:
                continue
            d = " ".join(f"{'M' if j == 0 else 'L'}{_f(sx(n))} {_f(sy(p))}"
                         for j, (n, p) in enumerate(pts))
            parts.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for n, p in pts:
                parts.append(f'<circle cx="{_f(sx(n))}" cy="{_f(sy(p))}" r="2.5" fill="{color}"/>')
    parts.append(f'<text x="{_f(width / 2)}" y="{TOP + PLOT_H + 34}" font-size="12" '
                 'text-anchor="middle" font-family="sans-serif">Sample size</text>')
    parts.append(f'<text x="16" y="{_f(TOP + PLOT_H / 2)}" font-size="12" text-anchor="middle" '
                 f'font-family="sans-serif" transform="rotate(-90 16 {_f(TOP + PLOT_H / 2)})">'
                 'Rejection fraction</text>')
    for k, method in enumerate(methods):
        y = TOP + PLOT_H + 52 + 18 * k
        color = PALETTE[k % len(PALETTE)]
        parts.append(f'<line x1="{LEFT}" y1="{y - 4}" x2="{LEFT + 20}" y2="{y - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{LEFT + 26}" y="{y}" font-size="12" font-family="sans-serif">'
                     f'{escape(method)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
