"""Top-down (x, y) SVG overlay of reference / estimated / executed paths.

Hand-written SVG so the bytes depend only on the input: fixed element order,
fixed number formatting, no timestamps.
"""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptyInput
from .trajectory import Trajectory

# (key, legend label, stroke colour, dash pattern)
STYLES = (
    ("reference", "reference", "#d4a017", ""),
    ("estimated", "estimated (VO)", "#1f77b4", "6 3"),
    ("executed", "executed", "#2ca02c", ""),
)
TARGET_COLOUR = "#808080"


def nice_step(span: float, ticks: int = 5) -> float:
    """Tick spacing from {1, 2, 5} x 10^k giving about ``ticks`` intervals."""
    if not span > 0:
        return 1.0
    raw = span / ticks
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 5.0, 10.0):
        if raw <= m * mag:
            return m * mag
    return 10.0 * mag


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick_label(v: float, step: float) -> str:
    digits = max(0, -int(math.floor(math.log10(step)))) if step < 1 else 0
    s = f"{v:.{digits}f}"
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def render_overlay(reference: Trajectory | None = None,
                   estimated: Trajectory | None = None,
                   executed: Trajectory | None = None,
                   target=None, width: int = 560, height: int = 560,
                   margin: int = 56) -> str:
    """Standalone SVG document; one ``<polyline>`` per trajectory given.

    ``target`` (x, y[, z]) adds a single ``<circle>`` marker.  Scaling is
    isotropic so circles look like circles.
    """
    paths = [(key, label, colour, dash, traj)
             for (key, label, colour, dash), traj in zip(STYLES, (reference, estimated, executed))
             if traj is not None and len(traj) > 0]
    if not paths:
        raise EmptyInput("no trajectory to draw")

    xy = np.concatenate([p[-1].pos[:, :2] for p in paths])
    if target is not None:
        xy = np.vstack([xy, np.asarray(target, dtype=float)[:2]])
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    step = nice_step(span)
    # pad to whole ticks, keep the aspect ratio 1:1
    lo = np.floor(lo / step) * step
    hi = np.ceil(hi / step) * step
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], step))
    centre = 0.5 * (lo + hi)
    lo, hi = centre - span / 2, centre + span / 2
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    s = min(plot_w, plot_h) / span

    def px(x, y):
        return margin + (x - lo[0]) * s, height - margin - (y - lo[1]) * s

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        '<g id="axes" stroke="#000000" stroke-width="1">',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}"/>',
    ]
    ticks = []
    first = math.ceil(lo[0] / step - 1e-9)
    for i in range(first, int(math.floor(hi[0] / step + 1e-9)) + 1):
        v = i * step
        x, _ = px(v, lo[1])
        out.append(f'<line x1="{_fmt(x)}" y1="{height - margin}" x2="{_fmt(x)}" y2="{height - margin + 5}"/>')
        ticks.append(f'<text x="{_fmt(x)}" y="{height - margin + 18}" text-anchor="middle">'
                     f'{_tick_label(v, step)}</text>')
    first = math.ceil(lo[1] / step - 1e-9)
    for i in range(first, int(math.floor(hi[1] / step + 1e-9)) + 1):
        v = i * step
        _, y = px(lo[0], v)
        out.append(f'<line x1="{margin - 5}" y1="{_fmt(y)}" x2="{margin}" y2="{_fmt(y)}"/>')
        ticks.append(f'<text x="{margin - 8}" y="{_fmt(y + 4)}" text-anchor="end">'
                     f'{_tick_label(v, step)}</text>')
    out.append("</g>")
    out.append('<g id="ticks" fill="#000000">')
    out.extend(ticks)
    out.append(f'<text x="{width / 2:.0f}" y="{height - 14}" text-anchor="middle">x [m]</text>')
    out.append(f'<text x="16" y="{height / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {height / 2:.0f})">y [m]</text>')
    out.append("</g>")

    for key, label, colour, dash, traj in paths:
        pts = " ".join("{},{}".format(*map(_fmt, px(x, y))) for x, y in traj.pos[:, :2])
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline id="{key}" fill="none" stroke="{colour}" stroke-width="2"'
                   f'{dash_attr} points="{pts}"/>')

    if target is not None:
        tx, ty = px(float(target[0]), float(target[1]))
        out.append(f'<circle id="target" cx="{_fmt(tx)}" cy="{_fmt(ty)}" r="7" '
                   f'fill="{TARGET_COLOUR}" fill-opacity="0.6" stroke="{TARGET_COLOUR}"/>')

    out.append('<g id="legend">')
    ly = margin / 2
    lx = margin
    for key, label, colour, dash, _ in paths:
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{lx}" y1="{ly:.0f}" x2="{lx + 24}" y2="{ly:.0f}" stroke="{colour}" '
                   f'stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4:.0f}">{escape(label)}</text>')
        lx += 40 + 7 * len(label)
    if target is not None:
        out.append(f'<text x="{lx}" y="{ly + 4:.0f}" fill="{TARGET_COLOUR}">&#9679; target</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_overlay(path, svg: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
