from __future__ import annotations

import io
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from cooc.core.correlation import CorrelationMatrix

RGB = Tuple[int, int, int]

NEGATIVE: RGB = (33, 102, 172)
POSITIVE: RGB = (178, 24, 43)
NEUTRAL: RGB = (247, 247, 247)
INVALID: RGB = (190, 190, 190)


def _mix(a: RGB, b: RGB, t: float) -> RGB:
    return tuple(int(round(x + (y - x) * t)) for x, y in zip(a, b))  # type: ignore[return-value]


def cell_color(value: float, valid: bool = True) -> RGB:
    """Blue (-1) - white (0) - red (+1) diverging scale; grey for invalid pairs."""
    if not valid or not np.isfinite(value):
        return INVALID
    v = float(np.clip(value, -1.0, 1.0))
    if v < 0:
        return _mix(NEUTRAL, NEGATIVE, -v)
    return _mix(NEUTRAL, POSITIVE, v)


def render_heatmap(
    corr: CorrelationMatrix,
    class_names: Optional[Sequence[str]] = None,
    cell: int = 56,
    title: str = "",
) -> Image.Image:
    names = list(class_names or corr.class_names or [str(i) for i in range(corr.U)])
    u = corr.U
    font = ImageFont.load_default()
    margin = max(60, 8 * max(len(n) for n in names))
    top = margin + (20 if title else 0)

    img = Image.new("RGB", (margin + u * cell + 8, top + u * cell + 8), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    if title:
        draw.text((4, 4), title, fill=(0, 0, 0), font=font)

    for i, name in enumerate(names):
        draw.text((4, top + i * cell + cell // 2 - 5), name, fill=(0, 0, 0), font=font)
        draw.text((margin + i * cell + 4, top - 16), name, fill=(0, 0, 0), font=font)

    for i in range(u):
        for j in range(u):
            x0, y0 = margin + j * cell, top + i * cell
            value, ok = float(corr.values[i, j]), bool(corr.valid[i, j])
            draw.rectangle([x0, y0, x0 + cell - 1, y0 + cell - 1], fill=cell_color(value, ok), outline=(255, 255, 255))
            if ok:
                ink = (255, 255, 255) if abs(value) > 0.6 else (0, 0, 0)
                draw.text((x0 + 6, y0 + cell // 2 - 5), f"{value:.2f}", fill=ink, font=font)
    return img


def heatmap_png_bytes(corr: CorrelationMatrix, class_names: Optional[Sequence[str]] = None, title: str = "") -> bytes:
    buf = io.BytesIO()
    render_heatmap(corr, class_names, title=title).save(buf, format="PNG")
    return buf.getvalue()
