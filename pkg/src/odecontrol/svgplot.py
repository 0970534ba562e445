"""Minimal SVG renderings of run CSVs: line charts and heatmaps.

These are convenience views; the CSVs remain the data contract. Everything
is emitted as a self-contained SVG string with no external assets.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#c23b22", "#1f5fa6", "#3e8e41", "#8e44ad", "#d4881e", "#16808a")

# dark blue -> teal -> yellow ramp for heatmaps
_RAMP = ((0.10, 0.10, 0.35), (0.10, 0.55, 0.55), (0.95, 0.90, 0.25))


def _ramp_color(v: float) -> str:
    if not np.isfinite(v):
        return "#bbbbbb"
    v = min(max(float(v), 0.0), 1.0)
    if v < 0.5:
        lo, hi, s = _RAMP[0], _RAMP[1], v / 0.5
    else:
        lo, hi, s = _RAMP[1], _RAMP[2], (v - 0.5) / 0.5
    rgb = [int(round(255 * (a + (b - a) * s))) for a, b in zip(lo, hi)]
    return "#%02x%02x%02x" % tuple(rgb)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def _log_safe(values: np.ndarray) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64).copy()
    out[~(out > 0.0)] = np.nan
    return np.log10(out)


def line_chart(
    series: list[tuple[str, np.ndarray, np.ndarray]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_x: bool = False,
    log_y: bool = False,
    width: int = 640,
    height: int = 420,
) -> str:
    """Polyline chart of (name, x, y) series with shared axes.

    Log axes plot log10 of the data and label ticks with the raw values;
    non-positive points are dropped on a log axis.
    """
    ml, mr, mt, mb = 62, 16, 28, 46
    pw, ph = width - ml - mr, height - mt - mb
    prepared = []
    for name, xs, ys in series:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if log_x:
            xs = _log_safe(xs)
        if log_y:
            ys = _log_safe(ys)
        keep = np.isfinite(xs) & np.isfinite(ys)
        prepared.append((name, xs[keep], ys[keep]))
    finite_x = np.concatenate([xs for _, xs, _ in prepared if xs.size] or [np.zeros(1)])
    finite_y = np.concatenate([ys for _, _, ys in prepared if ys.size] or [np.zeros(1)])
    x_lo, x_hi = float(finite_x.min()), float(finite_x.max())
    y_lo, y_hi = float(finite_y.min()), float(finite_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
            f'font-size="13">{escape(title)}</text>'
        )
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        label = f"1e{tx:.3g}" if log_x else _fmt(tx)
        parts.append(f'<line x1="{x:.1f}" y1="{mt + ph}" x2="{x:.1f}" y2="{mt + ph + 4}" stroke="#444"/>')
        parts.append(
            f'<text x="{x:.1f}" y="{mt + ph + 16}" text-anchor="middle">{escape(label)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        y = py(ty)
        label = f"1e{ty:.3g}" if log_y else _fmt(ty)
        parts.append(f'<line x1="{ml - 4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="#444"/>')
        parts.append(
            f'<text x="{ml - 6}" y="{y + 3:.1f}" text-anchor="end">{escape(label)}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">'
            f"{escape(xlabel)}</text>"
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>'
        )
    for k, (name, xs, ys) in enumerate(prepared):
        if not xs.size:
            continue
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        if name:
            ly = mt + 14 + 14 * k
            parts.append(
                f'<line x1="{ml + pw - 120}" y1="{ly - 4}" x2="{ml + pw - 100}" '
                f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
            )
            parts.append(f'<text x="{ml + pw - 95}" y="{ly}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap(
    xs: np.ndarray,
    ys: np.ndarray,
    z: np.ndarray,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_color: bool = False,
    width: int = 640,
    height: int = 480,
) -> str:
    """Cell grid colored by z[i, j] at (xs[i], ys[j]); NaN cells render grey."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (xs.shape[0], ys.shape[0]):
        raise ValueError(f"z shape {z.shape} does not match axes "
                         f"({xs.shape[0]}, {ys.shape[0]})")
    zc = _log_safe(z) if log_color else z
    finite = zc[np.isfinite(zc)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    if hi == lo:
        hi = lo + 1.0
    ml, mr, mt, mb = 62, 70, 28, 46
    pw, ph = width - ml - mr, height - mt - mb
    cw, ch = pw / xs.shape[0], ph / ys.shape[0]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
            f'font-size="13">{escape(title)}</text>'
        )
    for i in range(xs.shape[0]):
        for j in range(ys.shape[0]):
            v = (zc[i, j] - lo) / (hi - lo)
            color = _ramp_color(v if np.isfinite(zc[i, j]) else np.nan)
            x = ml + i * cw
            y = mt + ph - (j + 1) * ch  # ys increase upward
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.5:.2f}" '
                f'height="{ch + 0.5:.2f}" fill="{color}"/>'
            )
    parts.append(
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        i = int(round(frac * (xs.shape[0] - 1)))
        x = ml + (i + 0.5) * cw
        parts.append(
            f'<text x="{x:.1f}" y="{mt + ph + 16}" text-anchor="middle">'
            f"{escape(_fmt(float(xs[i])))}</text>"
        )
        j = int(round(frac * (ys.shape[0] - 1)))
        y = mt + ph - (j + 0.5) * ch
        parts.append(
            f'<text x="{ml - 6}" y="{y + 3:.1f}" text-anchor="end">'
            f"{escape(_fmt(float(ys[j])))}</text>"
        )
    if xlabel:
        parts.append(
            f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">'
            f"{escape(xlabel)}</text>"
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>'
        )
    # color scale bar
    bar_x = ml + pw + 18
    steps = 32
    for k in range(steps):
        frac = k / (steps - 1)
        y = mt + ph - (k + 1) * (ph / steps)
        parts.append(
            f'<rect x="{bar_x}" y="{y:.2f}" width="14" height="{ph / steps + 0.5:.2f}" '
            f'fill="{_ramp_color(frac)}"/>'
        )
    for frac, v in ((0.0, lo), (1.0, hi)):
        y = mt + ph - frac * ph
        label = f"1e{v:.3g}" if log_color else _fmt(v)
        parts.append(f'<text x="{bar_x + 18}" y="{y + 3:.1f}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
