"""Dependency-free SVG bar charts for evaluation reports.

Output is deterministic: fixed layout, fixed decimal formatting, no
timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

from typing import Sequence

from .errors import InputError


def svg_bar_chart(labels: Sequence[str], values: Sequence[float], title: str = "",
                  y_max: float | None = None, width: int = 640, height: int = 360) -> str:
    if len(labels) != len(values):
        raise InputError("labels and values must align")
    if not labels:
        raise InputError("empty chart")
    top = y_max if y_max is not None else max(max(values), 1e-9)
    margin_l, margin_b, margin_t = 50, 40, 30
    plot_w = width - margin_l - 10
    plot_h = height - margin_b - margin_t
    n = len(values)
    slot = plot_w / n
    bar_w = slot * 0.7
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-family="monospace" font-size="14">{_esc(title)}</text>')
    # axes
    x0, y0 = margin_l, margin_t + plot_h
    parts.append(f'<line x1="{x0}" y1="{margin_t}" x2="{x0}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y0 - frac * plot_h
        parts.append(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-family="monospace" font-size="10">{frac * top:.2f}</text>')
    for i, (label, value) in enumerate(zip(labels, values)):
        clamped = min(max(float(value), 0.0), top)
        h = plot_h * clamped / top
        x = x0 + i * slot + (slot - bar_w) / 2
        y = y0 - h
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" '
                     f'fill="#4878a8"/>')
        parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{y - 4:.1f}" text-anchor="middle" '
                     f'font-family="monospace" font-size="10">{float(value):.3f}</text>')
        parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{y0 + 14:.1f}" text-anchor="middle" '
                     f'font-family="monospace" font-size="10">{_esc(str(label))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
