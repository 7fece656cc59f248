"""Static SVG heatmaps of interaction matrices.

The SVG is written by hand as text so the output is byte-stable across
platforms and library versions: the lower triangle (diagonal included) of
a symmetric factor-by-factor matrix, coloured on a diverging blue-white-red
scale over [0, 1] with each value printed in its cell.
"""

from __future__ import annotations

import math
import os
from collections.abc import Sequence
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CELL = 64
LABEL_WIDTH = 150
HEADER = 40
FONT = "sans-serif"
FONT_SIZE = 12

_BLUE = (33, 102, 172)
_WHITE = (247, 247, 247)
_RED = (178, 24, 43)
_MISSING = "#d9d9d9"


def colour(value: float) -> str:
    """Hex colour for *value* in [0, 1]: blue at 0, white at 0.5, red at 1.

    NaN maps to light grey; values outside [0, 1] are clamped.
    """
    if math.isnan(value):
        return _MISSING
    v = min(1.0, max(0.0, value))
    if v < 0.5:
        lo, hi, t = _BLUE, _WHITE, v / 0.5
    else:
        lo, hi, t = _WHITE, _RED, (v - 0.5) / 0.5
    rgb = (round(a + (b - a) * t) for a, b in zip(lo, hi))
    return "#" + "".join(f"{c:02x}" for c in rgb)


def _text_colour(value: float) -> str:
    return "#ffffff" if not math.isnan(value) and abs(value - 0.5) > 0.35 else "#000000"


def render_heatmap(matrix: np.ndarray, labels: Sequence[str], title: str = "") -> str:
    """SVG document for the lower triangle of a square *matrix*."""
    size = len(labels)
    if matrix.shape != (size, size):
        raise ValueError(f"matrix shape {matrix.shape} does not match {size} labels")
    width = LABEL_WIDTH + size * CELL + 10
    height = HEADER + size * CELL + LABEL_WIDTH

    out: list[str] = []
    out.append(
        f'<svg viewBox="0,0,{width},{height}" width="{width}" height="{height}" '
        f'style="font: {FONT_SIZE}px {FONT}; background-color: #ffffff;" '
        'xmlns="http://www.w3.org/2000/svg">'
    )
    if title:
        out.append(f'<text x="4" y="{HEADER // 2 + 4}" font-weight="bold">{escape(title)}</text>')
    for i in range(size):
        y = HEADER + i * CELL
        out.append(
            f'<text x="{LABEL_WIDTH - 6}" y="{y + CELL // 2 + 4}" text-anchor="end">{escape(labels[i])}</text>'
        )
        for j in range(i + 1):
            x = LABEL_WIDTH + j * CELL
            value = float(matrix[i, j])
            shown = "NA" if math.isnan(value) else f"{value:.3f}"
            out.append(f'<g transform="translate({x},{y})">')
            out.append(f"<title>{escape(labels[i])} x {escape(labels[j])}: {shown}</title>")
            out.append(f'<rect width="{CELL}" height="{CELL}" fill="{colour(value)}" stroke="#ffffff"/>')
            out.append(
                f'<text x="{CELL // 2}" y="{CELL // 2 + 4}" text-anchor="middle" '
                f'fill="{_text_colour(value)}">{shown}</text>'
            )
            out.append("</g>")
    base = HEADER + size * CELL + 8
    for j in range(size):
        x = LABEL_WIDTH + j * CELL + CELL // 2
        out.append(
            f'<text x="{x}" y="{base}" text-anchor="end" transform="rotate(-45 {x} {base})">{escape(labels[j])}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_heatmap(path: str | os.PathLike[str], matrix: np.ndarray, labels: Sequence[str], title: str = "") -> None:
    Path(path).write_text(render_heatmap(matrix, labels, title), encoding="utf-8", newline="\n")
