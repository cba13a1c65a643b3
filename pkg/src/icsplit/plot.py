"""Static SVG line charts for sweep curves.

The output is plain text built from fixed-precision numbers, so the same
curve always gives the same bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 320
LEFT, RIGHT, TOP, BOTTOM = 64, 20, 36, 52


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks, t = [], first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _label(v: float) -> str:
    if v != 0 and (abs(v) < 1e-3 or abs(v) >= 1e4):
        return f"{v:.0e}"
    return f"{v:g}"


def render_curve(x, mean, std, x_label: str, y_label: str = "balanced accuracy",
                 title: str | None = None, log_x: bool | None = None) -> str:
    """SVG text for ``mean`` against ``x`` with ``+-std`` error bars.

    ``log_x=None`` picks a log axis when all x are positive and span at least
    two decades.  Points with a missing mean are skipped.
    """
    x, mean, std = (np.asarray(a, dtype=np.float64) for a in (x, mean, std))
    keep = ~np.isnan(mean)
    x, mean, std = x[keep], mean[keep], np.nan_to_num(std[keep])
    if len(x) == 0:
        raise ValueError("curve has no points")
    order = np.argsort(x, kind="stable")
    x, mean, std = x[order], mean[order], std[order]
    if log_x is None:
        log_x = bool(np.all(x > 0) and x.max() / x.min() >= 100)
    if log_x and np.any(x <= 0):
        raise ValueError("log x axis needs positive values")
    fx = np.log10(x) if log_x else x

    x_lo, x_hi = float(fx.min()), float(fx.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_ticks = _nice_ticks(float((mean - std).min()), float((mean + std).max()))
    y_lo, y_hi = y_ticks[0], y_ticks[-1]
    if y_hi == y_lo:
        y_hi = y_lo + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return TOP + (y_hi - v) / (y_hi - y_lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
    # axes
    out.append(f'<path d="M{LEFT} {TOP}V{TOP + ph}H{LEFT + pw}" fill="none" stroke="black"/>')
    for t in y_ticks:
        y = py(t)
        out.append(f'<line class="tick" x1="{LEFT - 4}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{LEFT - 7}" y="{y + 4:.2f}" text-anchor="end">{_label(t)}</text>')
    if log_x:
        x_ticks = [float(e) for e in range(math.ceil(x_lo - 1e-9), math.floor(x_hi + 1e-9) + 1)]
        x_names = [_label(10 ** e) for e in x_ticks]
    else:
        x_ticks = sorted(set(float(v) for v in fx))
        x_names = [_label(v) for v in x_ticks]
    for t, name in zip(x_ticks, x_names):
        xx = px(t)
        out.append(f'<line class="tick" x1="{xx:.2f}" y1="{TOP + ph}" x2="{xx:.2f}" '
                   f'y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{xx:.2f}" y="{TOP + ph + 17}" text-anchor="middle">{name}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">'
               f'{escape(x_label)}</text>')
    out.append(f'<text x="14" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {TOP + ph / 2:.1f})">{escape(y_label)}</text>')
    # error bars, line, markers
    for xv, m, s in zip(fx, mean, std):
        if s > 0:
            xx, y0, y1 = px(xv), py(m - s), py(m + s)
            out.append(f'<path class="errorbar" d="M{xx:.2f} {y0:.2f}V{y1:.2f}'
                       f'M{xx - 4:.2f} {y0:.2f}h8M{xx - 4:.2f} {y1:.2f}h8" stroke="#555"/>')
    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(fx, mean))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>')
    for a, b in zip(fx, mean):
        out.append(f'<circle class="point" cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" '
                   f'fill="#1f4e9c"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
