"""Minimal SVG line plots and histograms; CSV outputs remain the contract."""

import math
from pathlib import Path

import numpy as np

W, H, PAD = 640, 400, 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x):
    return f"{x:.3g}"


def _frame(title, xlabel, ylabel, xlim, ylim, xlog):
    x0, x1 = xlim
    y0, y1 = ylim
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{ylabel}</text>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
    ]
    for i in range(5):
        f = i / 4
        xv = math.exp(math.log(x0) + f * (math.log(x1) - math.log(x0))) if xlog else x0 + f * (x1 - x0)
        px = PAD + f * (W - 2 * PAD)
        parts.append(f'<text x="{px:.1f}" y="{H - PAD + 16}" text-anchor="middle" font-size="10">{_fmt(xv)}</text>')
        py = H - PAD - f * (H - 2 * PAD)
        parts.append(f'<text x="{PAD - 4}" y="{py:.1f}" text-anchor="end" font-size="10">{_fmt(y0 + f * (y1 - y0))}</text>')
    return parts


def _scaler(lim, lo_px, hi_px, log=False):
    a, b = (math.log(lim[0]), math.log(lim[1])) if log else lim
    span = (b - a) or 1.0

    def f(v):
        v = math.log(v) if log else v
        return lo_px + (v - a) / span * (hi_px - lo_px)
    return f


def line_plot(path, series, title="", xlabel="", ylabel="", xlog=False):
    """``series`` maps a label to ``(x, y)`` arrays."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    xlim = (float(xs.min()), float(xs.max()))
    ylim = (float(min(ys.min(), 0.0) if not xlog else ys.min()), float(ys.max()))
    if ylim[0] == ylim[1]:
        ylim = (ylim[0] - 1.0, ylim[1] + 1.0)
    sx = _scaler(xlim, PAD, W - PAD, xlog)
    sy = _scaler(ylim, H - PAD, PAD)
    parts = _frame(title, xlabel, ylabel, xlim, ylim, xlog)
    for i, (label, (x, y)) in enumerate(series.items()):
        c = COLORS[i % len(COLORS)]
        pts = " ".join(f"{sx(float(a)):.1f},{sy(float(b)):.1f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{W - PAD + 4}" y="{PAD + 14 * i}" font-size="10" fill="{c}">{label}</text>')
    parts.append("</svg>")
    return _write(path, parts)


def histogram(path, values, bins=60, title="", xlabel="", overlay=None):
    """Density histogram; ``overlay`` is an optional ``(x, density)`` curve."""
    v = np.asarray(values, float).ravel()
    dens, edges = np.histogram(v, bins=bins, density=True)
    ymax = float(dens.max())
    if overlay is not None:
        ymax = max(ymax, float(np.max(overlay[1])))
    xlim = (float(edges[0]), float(edges[-1]))
    if xlim[0] == xlim[1]:
        xlim = (xlim[0] - 1.0, xlim[1] + 1.0)
    ylim = (0.0, ymax or 1.0)
    sx = _scaler(xlim, PAD, W - PAD)
    sy = _scaler(ylim, H - PAD, PAD)
    parts = _frame(title, xlabel, "density", xlim, ylim, False)
    for d, a, b in zip(dens, edges[:-1], edges[1:]):
        x, y = sx(a), sy(d)
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{max(sx(b) - x, 0.5):.1f}" '
                     f'height="{H - PAD - y:.1f}" fill="{COLORS[0]}" opacity="0.6"/>')
    if overlay is not None:
        pts = " ".join(f"{sx(float(a)):.1f},{sy(float(b)):.1f}" for a, b in zip(*overlay)
                       if xlim[0] <= a <= xlim[1])
        parts.append(f'<polyline fill="none" stroke="{COLORS[1]}" stroke-width="1.5" points="{pts}"/>')
    parts.append("</svg>")
    return _write(path, parts)


def _write(path, parts):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path
