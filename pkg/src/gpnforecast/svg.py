"""Minimal deterministic SVG bar charts for static reports."""

from __future__ import annotations

from html import escape
from typing import Sequence


def bar_chart(labels: Sequence[str], values: Sequence[float], title: str,
              unit: str = "", width: int = 720, bar_height: int = 18) -> str:
    """Horizontal bar chart. Output depends only on the inputs."""
    label_w = 8 * max((len(s) for s in labels), default=4) + 16
    top = 40
    height = top + bar_height * len(labels) + 30
    plot_w = width - label_w - 90
    vmax = max((v for v in values if v == v), default=0.0) or 1.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for i, (label, value) in enumerate(zip(labels, values)):
        y = top + i * bar_height
        w = 0.0 if value != value else plot_w * max(value, 0.0) / vmax
        out.append(f'<text x="{label_w - 6}" y="{y + bar_height - 5}" text-anchor="end">'
                   f'{escape(str(label))}</text>')
        out.append(f'<rect x="{label_w}" y="{y + 2}" width="{w:.2f}" height="{bar_height - 4}" '
                   f'fill="#4a78a8"/>')
        out.append(f'<text x="{label_w + w + 4:.2f}" y="{y + bar_height - 5}">'
                   f'{value:.4g}{escape(unit)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
