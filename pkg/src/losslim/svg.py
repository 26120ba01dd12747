"""Dependency-free SVG heatmaps of gain matrices."""

from __future__ import annotations

import numpy as np

from .analysis import GainMatrix

# 8-step sequential map, dark to light
PALETTE = ("#440154", "#46327e", "#365c8d", "#277f8e",
           "#1fa187", "#4ac16d", "#a0da39", "#fde725")

CELL = 8
MARGIN = 4


def color_index(values, lo, hi) -> np.ndarray:
    """Palette bin of each value on the closed range ``[lo, hi]``."""
    v = np.asarray(values, dtype=float)
    if not hi > lo:
        return np.zeros(v.shape, dtype=int)
    t = (v - lo) / (hi - lo)
    return np.clip((t * len(PALETTE)).astype(int), 0, len(PALETTE) - 1)


def heatmap(g: GainMatrix, cell=CELL) -> str:
    """Render ``g`` as an SVG document.

    H2 matrices are drawn on a natural-log scale and H-infinity matrices on
    a linear scale.  Each cluster's diagonal block is outlined in white.
    """
    shown = g.log() if g.metric == "H2" else g
    vals = shown.values
    finite = vals[np.isfinite(vals)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    idx = color_index(np.where(np.isfinite(vals), vals, lo), lo, hi)
    n = g.n
    size = 2 * MARGIN + n * cell
    scale = "ln" if g.metric == "H2" else "linear"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f"<!-- metric={g.metric} scale={scale} min={lo:.17g} max={hi:.17g} n={n} -->",
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="#ffffff"/>',
    ]
    for i in range(n):
        y = MARGIN + i * cell
        for k in range(n):
            x = MARGIN + k * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{PALETTE[idx[i, k]]}"/>')
    if g.clusters:
        cuts = g.cluster_boundaries
        for a, b in zip(cuts[:-1], cuts[1:]):
            off = MARGIN + a * cell
            w = (b - a) * cell
            out.append(f'<rect x="{off}" y="{off}" width="{w}" height="{w}" fill="none" '
                       f'stroke="#ffffff" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
