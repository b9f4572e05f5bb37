"""SVG heatmaps of mean accident probabilities over the space-time grid around events."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

from .domain import ACCIDENTS, DEFAULT_CELL_DURATION, DEFAULT_CELL_LENGTH

PROB_COLUMNS = {"RE": "p_re", "LC": "p_lc", "ROR": "p_ror"}
UNIT = 1e-5
CELL_PX = 36
LOW = (255, 255, 255)
HIGH = (178, 24, 43)


def grid_means(predictions: pd.DataFrame) -> tuple[np.ndarray, np.ndarray, dict]:
    """Mean probability per (s_index, p_index) for every accident type.

    Returns the sorted spatial and temporal indices and a dict of
    (n_space, n_time) arrays; cells without predictions are NaN.
    """
    s_vals = np.sort(predictions["s_index"].unique())
    p_vals = np.sort(predictions["p_index"].unique())
    means = predictions.groupby(["s_index", "p_index"])[list(PROB_COLUMNS.values())].mean()
    grids = {}
    for name, col in PROB_COLUMNS.items():
        g = np.full((s_vals.size, p_vals.size), np.nan)
        for (s, p), v in means[col].items():
            g[np.searchsorted(s_vals, s), np.searchsorted(p_vals, p)] = v
        grids[name] = g
    return s_vals, p_vals, grids


def color(value: float, vmax: float) -> str:
    """Linear white-to-red ramp on [0, vmax]; grey for missing cells."""
    if not np.isfinite(value):
        return "#d9d9d9"
    f = 0.0 if vmax <= 0 else min(max(value / vmax, 0.0), 1.0)
    rgb = [round(lo + f * (hi - lo)) for lo, hi in zip(LOW, HIGH)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_svg(predictions: pd.DataFrame, cell_length: float = DEFAULT_CELL_LENGTH,
               cell_duration: float = DEFAULT_CELL_DURATION, title: str = "") -> str:
    """Three panels (RE, LC, ROR) sharing one linear colour scale in 1e-5 units.

    Rows run upstream from the event location (spatial index 0 on top);
    columns run back in time from the event (temporal index 0 on the right).
    """
    s_vals, p_vals, grids = grid_means(predictions)
    finite = [g[np.isfinite(g)] for g in grids.values()]
    vmax = max((float(f.max()) for f in finite if f.size), default=0.0)
    ns, nt = s_vals.size, p_vals.size
    pw, ph = nt * CELL_PX, ns * CELL_PX
    left, top, gap = 70, 50, 40
    legend_h = 60
    width = left + 3 * pw + 2 * gap + 30
    height = top + ph + 40 + legend_h
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>')
    for i, k in enumerate(ACCIDENTS):
        x0 = left + i * (pw + gap)
        out.append(f'<g class="panel" id="panel-{k.name}">')
        out.append(f'<text x="{x0 + pw / 2:g}" y="{top - 12}" text-anchor="middle" '
                   f'font-size="12">{k.name}</text>')
        g = grids[k.name]
        for r in range(ns):
            for c in range(nt):
                # time runs right to left: the event period sits in the last column
                x = x0 + (nt - 1 - c) * CELL_PX
                y = top + r * CELL_PX
                v = g[r, c]
                label = "n/a" if not np.isfinite(v) else f"{v / UNIT:.3g}"
                out.append(
                    f'<rect class="cell" x="{x}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" '
                    f'fill="{color(v, vmax)}" stroke="#ffffff" stroke-width="1">'
                    f'<title>s={int(s_vals[r])} p={int(p_vals[c])}: {label}e-5</title></rect>'
                )
        out.append('</g>')
    for r in range(ns):
        out.append(f'<text x="{left - 6}" y="{top + r * CELL_PX + CELL_PX / 2 + 4:g}" text-anchor="end">'
                   f'-{int(s_vals[r] * cell_length)} m</text>')
    out.append(f'<text x="{left}" y="{top + ph + 16}">time before event: '
               f'{int(p_vals[-1] * cell_duration)} s (left) to 0 s (right)</text>')

    ly = top + ph + 34
    lw = 3 * pw + 2 * gap
    steps = 50
    out.append('<g id="legend">')
    for j in range(steps):
        f = (j + 0.5) / steps
        out.append(f'<rect x="{left + j * lw / steps:.2f}" y="{ly}" width="{lw / steps:.2f}" height="12" '
                   f'fill="{color(f * vmax, vmax)}"/>')
    for j in range(5):
        f = j / 4
        out.append(f'<text x="{left + f * lw:.2f}" y="{ly + 26}" text-anchor="middle">'
                   f'{f * vmax / UNIT:.3g}</text>')
    out.append(f'<text x="{left}" y="{ly + 42}">mean probability (in 1e-5), linear scale</text>')
    out.append('</g>')
    out.append('</svg>')
    return "\n".join(out) + "\n"
