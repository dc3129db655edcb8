"""Deterministic chart rendering (Pillow, no plotting framework).

Reports must be byte-stable across runs, so charts are drawn directly
into pixel buffers with PIL's built-in bitmap font: same inputs, same
PNG bytes.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image, ImageDraw

_BG = (255, 255, 255)
_FG = (30, 30, 30)
_GRID = (210, 210, 210)


def bar_chart_png(
    values,
    labels,
    colors=None,
    title: str = "",
    width: int = 640,
    height: int = 400,
) -> bytes:
    """Vertical bar chart as PNG bytes."""
    values = [float(v) for v in values]
    n = len(values)
    img = Image.new("RGB", (width, height), _BG)
    draw = ImageDraw.Draw(img)
    margin_l, margin_r, margin_t, margin_b = 50, 20, 30, 40
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    top = max(max(values, default=0.0), 1e-9)

    if title:
        draw.text((margin_l, 8), title, fill=_FG)
    for frac in (0.25, 0.5, 0.75, 1.0):
        y = margin_t + plot_h - int(plot_h * frac)
        draw.line([(margin_l, y), (width - margin_r, y)], fill=_GRID)
        draw.text((4, y - 6), f"{top * frac:.2f}", fill=_FG)
    draw.line(
        [(margin_l, margin_t + plot_h), (width - margin_r, margin_t + plot_h)], fill=_FG
    )

    slot = plot_w / max(n, 1)
    bar_w = max(int(slot * 0.6), 3)
    for i, v in enumerate(values):
        x0 = margin_l + int(i * slot + (slot - bar_w) / 2)
        bar_h = int(plot_h * (v / top))
        y0 = margin_t + plot_h - bar_h
        color = tuple(colors[i]) if colors else (90, 120, 200)
        draw.rectangle([x0, y0, x0 + bar_w, margin_t + plot_h], fill=color, outline=_FG)
        label = str(labels[i])
        draw.text((x0, margin_t + plot_h + 6), label[:10], fill=_FG)
        draw.text((x0, max(y0 - 14, margin_t)), f"{v:.3f}", fill=_FG)

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def confusion_chart_png(
    matrix,
    labels,
    title: str = "",
    cell: int = 48,
) -> bytes:
    """Row-normalized confusion heatmap (rows = truth) as PNG bytes."""
    matrix = np.asarray(matrix, dtype=np.float64)
    k = matrix.shape[0]
    margin_l, margin_t = 90, 60
    width = margin_l + k * cell + 20
    height = margin_t + k * cell + 20
    img = Image.new("RGB", (width, height), _BG)
    draw = ImageDraw.Draw(img)
    if title:
        draw.text((margin_l, 8), title, fill=_FG)

    row_sums = matrix.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        norm = np.where(row_sums > 0, matrix / row_sums, 0.0)

    for i in range(k):
        for j in range(k):
            v = norm[i, j]
            shade = int(255 - 205 * v)
            color = (shade, shade, 255) if i == j else (255, shade, shade)
            x0 = margin_l + j * cell
            y0 = margin_t + i * cell
            draw.rectangle([x0, y0, x0 + cell - 1, y0 + cell - 1], fill=color, outline=_GRID)
            draw.text((x0 + 4, y0 + cell // 2 - 6), f"{int(matrix[i, j])}", fill=_FG)
    for i, label in enumerate(labels):
        draw.text((6, margin_t + i * cell + cell // 2 - 6), str(label)[:12], fill=_FG)
        draw.text((margin_l + i * cell + 2, margin_t - 16), str(label)[:6], fill=_FG)
    draw.text((6, margin_t - 40), "rows: truth / cols: predicted", fill=_FG)

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
