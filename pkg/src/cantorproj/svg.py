"""Minimal SVG output for leaf balls in the plane (or projected to a plane or line)."""

import numpy as np


def leaves_svg(centers, radii=None, size: int = 600, margin: int = 20) -> str:
    C = np.asarray(centers, dtype=float)
    if C.ndim == 1 or C.shape[1] == 1:
        C = np.c_[C.reshape(-1), np.zeros(len(C))]
    if C.shape[1] != 2:
        raise ValueError("SVG output needs 1- or 2-dimensional coordinates; pass a projection plane")
    r = np.zeros(len(C)) if radii is None else np.broadcast_to(np.asarray(radii, float), (len(C),))
    lo = (C - r[:, None]).min(axis=0)
    hi = (C + r[:, None]).max(axis=0)
    span = float(max((hi - lo).max(), 1e-300))
    scale = (size - 2 * margin) / span
    dot = 1.0  # keep sub-pixel balls visible
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    for (x, y), rr in zip(C, r):
        px = margin + (x - lo[0]) * scale
        py = size - margin - (y - lo[1]) * scale
        lines.append(f'<circle cx="{px:.3f}" cy="{py:.3f}" r="{max(rr * scale, dot):.3f}" fill="black"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
