"""Tiny deterministic SVG emitter for run diagnostics.

Hand-rolled on purpose: byte-identical output for identical inputs is part
of the reproducibility contract, which rules out plotting libraries with
ambient state (font discovery, locale decimals, version-dependent layout).
Only two artifact kinds exist — line charts and matrix heatmaps — so the
footprint stays small.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

_MARGIN = 42.0
_WIDTH = 640.0
_HEIGHT = 400.0


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def moving_average(values, window: int = 10) -> np.ndarray:
    """Trailing mean over up to `window` samples (presentation smoothing
    only; CSVs always carry the raw series)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v
    out = np.empty_like(v)
    c = np.cumsum(v)
    for i in range(v.size):
        lo = max(0, i - window + 1)
        out[i] = (c[i] - (c[lo - 1] if lo else 0.0)) / (i - lo + 1)
    return out


def _axis_range(lo: float, hi: float) -> tuple:
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart(series: dict, path, x_label: str = "", y_label: str = "",
               smooth_window: int = 0, y_range: tuple | None = None) -> None:
    """Write named (x, y) polylines: series = {label: (xs, ys)}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    xs_all = np.concatenate([np.asarray(x, np.float64) for x, _ in series.values()]) \
        if series else np.array([0.0, 1.0])
    ys_all = np.concatenate([np.asarray(y, np.float64) for _, y in series.values()]) \
        if series else np.array([0.0, 1.0])
    x_lo, x_hi = _axis_range(float(xs_all.min()), float(xs_all.max()))
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = _axis_range(float(ys_all.min()), float(ys_all.max()))

    def px(x): return _MARGIN + (x - x_lo) / (x_hi - x_lo) * (_WIDTH - 2 * _MARGIN)
    def py(y): return _HEIGHT - _MARGIN - (y - y_lo) / (y_hi - y_lo) * (_HEIGHT - 2 * _MARGIN)

    palette = ("#1f6f8b", "#c44536", "#3a7d44", "#8a4f9e", "#b08a00", "#444444")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(_WIDTH)}" '
        f'height="{int(_HEIGHT)}" viewBox="0 0 {int(_WIDTH)} {int(_HEIGHT)}">',
        f'<rect width="{int(_WIDTH)}" height="{int(_HEIGHT)}" fill="white"/>',
        f'<line x1="{_fmt(_MARGIN)}" y1="{_fmt(_HEIGHT - _MARGIN)}" '
        f'x2="{_fmt(_WIDTH - _MARGIN)}" y2="{_fmt(_HEIGHT - _MARGIN)}" stroke="#222"/>',
        f'<line x1="{_fmt(_MARGIN)}" y1="{_fmt(_MARGIN)}" '
        f'x2="{_fmt(_MARGIN)}" y2="{_fmt(_HEIGHT - _MARGIN)}" stroke="#222"/>',
    ]
    for tick in np.linspace(y_lo, y_hi, 5):
        parts.append(f'<text x="{_fmt(_MARGIN - 6)}" y="{_fmt(py(tick) + 4)}" '
                     f'font-size="11" text-anchor="end" fill="#222">{tick:.2f}</text>')
    for tick in np.linspace(x_lo, x_hi, 5):
        parts.append(f'<text x="{_fmt(px(tick))}" y="{_fmt(_HEIGHT - _MARGIN + 16)}" '
                     f'font-size="11" text-anchor="middle" fill="#222">{tick:g}</text>')
    if x_label:
        parts.append(f'<text x="{_fmt(_WIDTH / 2)}" y="{_fmt(_HEIGHT - 8)}" '
                     f'font-size="12" text-anchor="middle" fill="#222">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="14" y="{_fmt(_HEIGHT / 2)}" font-size="12" '
                     f'text-anchor="middle" fill="#222" '
                     f'transform="rotate(-90 14 {_fmt(_HEIGHT / 2)})">{y_label}</text>')

    for i, (label, (xs, ys)) in enumerate(series.items()):
        ys_draw = moving_average(ys, smooth_window) if smooth_window else np.asarray(ys, np.float64)
        color = palette[i % len(palette)]
        pts = " ".join(f"{_fmt(px(float(x)))},{_fmt(py(float(y)))}"
                       for x, y in zip(xs, ys_draw))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        parts.append(f'<text x="{_fmt(_WIDTH - _MARGIN + 4)}" '
                     f'y="{_fmt(_MARGIN + 14 * i + 4)}" font-size="11" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _heat_color(v: float) -> str:
    """v in [0, 1] -> cold-to-hot hex color."""
    v = min(max(v, 0.0), 1.0)
    r = int(round(255 * min(1.0, 2 * v)))
    g = int(round(255 * (1.0 - abs(2 * v - 1.0))))
    b = int(round(255 * min(1.0, 2 * (1.0 - v))))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix, path, title: str = "", vmin: float = -1.0,
            vmax: float = 1.0, cell: float = 6.0) -> None:
    """Similarity-matrix heatmap with row 0 at the top."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D matrix, got shape {m.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols = m.shape
    top = 26.0 if title else 4.0
    width = cols * cell + 8
    height = rows * cell + top + 8
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<rect width="{_fmt(width)}" height="{_fmt(height)}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="4" y="16" font-size="12" fill="#222">{title}</text>')
    span = vmax - vmin if vmax > vmin else 1.0
    for i in range(rows):
        for j in range(cols):
            v = (m[i, j] - vmin) / span
            parts.append(
                f'<rect x="{_fmt(4 + j * cell)}" y="{_fmt(top + i * cell)}" '
                f'width="{_fmt(cell)}" height="{_fmt(cell)}" '
                f'fill="{_heat_color(v)}"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
