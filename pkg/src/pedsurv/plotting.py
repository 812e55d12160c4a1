"""Dependency-free SVG step plots of survival curves with shaded 95% bands."""
from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .survival import SurvivalCurve

PALETTE = ("#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b")
W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 30, 50


def _sx(t, tmax):
    return LEFT + (W - LEFT - RIGHT) * np.asarray(t, dtype=float) / tmax


def _sy(s):
    return TOP + (H - TOP - BOTTOM) * (1.0 - np.asarray(s, dtype=float))


def _step_points(times, values, tmax):
    xs, ys = [], []
    for k, (t, v) in enumerate(zip(times, values)):
        if k:
            xs.append(t)
            ys.append(values[k - 1])
        xs.append(t)
        ys.append(v)
    xs.append(tmax)
    ys.append(values[-1])
    return np.array(xs), np.array(ys)


def _fmt(xs, ys):
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def svg_curves(
    curves: Sequence[SurvivalCurve],
    title: str = "",
    tmax: float | None = None,
    step: Sequence[bool] | None = None,
    dashed: Sequence[bool] | None = None,
) -> str:
    """Render curves on shared axes. ``step`` selects step vs line drawing per curve."""
    if tmax is None:
        tmax = max(float(c.times[-1]) for c in curves)
        tmax = max(10.0, 10.0 * np.ceil(tmax / 10.0))
    step = [True] * len(curves) if step is None else list(step)
    dashed = [False] * len(curves) if dashed is None else list(dashed)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
    ]
    x0, x1 = _sx(0, tmax), _sx(tmax, tmax)
    y0, y1 = _sy(0), _sy(1)
    out.append(f'<path d="M{x0:.2f},{y1:.2f} V{y0:.2f} H{x1:.2f}" stroke="black" fill="none"/>')
    for v in np.linspace(0, 1, 6):
        y = _sy(v)
        out.append(f'<line x1="{x0 - 4:.2f}" y1="{y:.2f}" x2="{x0:.2f}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8:.2f}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{v:.1f}</text>')
    for t in np.arange(0, tmax + 1e-9, 10 if tmax <= 120 else 20):
        x = _sx(t, tmax)
        out.append(f'<line x1="{x:.2f}" y1="{y0:.2f}" x2="{x:.2f}" y2="{y0 + 4:.2f}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{y0 + 18:.2f}" font-size="11" text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{H - 10}" font-size="12" text-anchor="middle">age (years)</text>')
    out.append(f'<text x="15" y="{(y0 + y1) / 2:.2f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 15 {(y0 + y1) / 2:.2f})">survival</text>')
    if title:
        out.append(f'<text x="{W / 2}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')

    for k, c in enumerate(curves):
        color = PALETTE[k % len(PALETTE)]
        keep = c.times <= tmax
        t, lo, hi, est = c.times[keep], c.lower[keep], c.upper[keep], c.estimate[keep]
        if step[k]:
            tx, lo_s = _step_points(t, lo, tmax)
            _, hi_s = _step_points(t, hi, tmax)
            tx_e, est_s = _step_points(t, est, tmax)
        else:
            tx, lo_s, hi_s, tx_e, est_s = t, lo, hi, t, est
        band_x = np.concatenate([tx, tx[::-1]])
        band_y = np.concatenate([hi_s, lo_s[::-1]])
        out.append(f'<polygon points="{_fmt(_sx(band_x, tmax), _sy(band_y))}" fill="{color}" '
                   f'fill-opacity="0.15" stroke="none"/>')
        dash = ' stroke-dasharray="6,4"' if dashed[k] else ""
        out.append(f'<polyline points="{_fmt(_sx(tx_e, tmax), _sy(est_s))}" fill="none" '
                   f'stroke="{color}" stroke-width="1.6"{dash}/>')
        label = escape(c.label or f"stratum {c.stratum}")
        ly = TOP + 16 * (k + 1)
        out.append(f'<line x1="{x1 - 130:.2f}" y1="{ly - 4}" x2="{x1 - 110:.2f}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{x1 - 104:.2f}" y="{ly}" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
