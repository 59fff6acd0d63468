"""Minimal vector-graphics (SVG) frame rendering for episode replays."""

from __future__ import annotations

import numpy as np


def render_frame(path, positions, half_sides, joints, segments,
                 pressure=None, area=None, margin=5.0, width_px=800):
    """Write one SVG frame.

    positions: (n, 2) body centers; half_sides: (n,) square half sides;
    joints: iterable of (a, b) body index pairs; segments: (s, >=4) static
    segment endpoints. The view box covers bodies and nearby statics.
    """
    positions = np.asarray(positions, np.float64)
    xs = positions[:, 0]
    ys = positions[:, 1]
    x0, x1 = xs.min() - margin, xs.max() + margin
    y0, y1 = ys.min() - margin, ys.max() + margin
    span_x = x1 - x0
    span_y = y1 - y0
    scale = width_px / span_x
    height_px = span_y * scale

    def sx(x):
        return (x - x0) * scale

    def sy(y):
        return (y1 - y) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.0f}" '
        f'height="{height_px:.0f}" viewBox="0 0 {width_px:.0f} {height_px:.0f}">',
        f'<rect width="100%" height="100%" fill="white"/>',
    ]
    for seg in np.asarray(segments, np.float64):
        parts.append(
            f'<line x1="{sx(seg[0]):.2f}" y1="{sy(seg[1]):.2f}" '
            f'x2="{sx(seg[2]):.2f}" y2="{sy(seg[3]):.2f}" '
            'stroke="black" stroke-width="2"/>')
    for a, b in joints:
        parts.append(
            f'<line x1="{sx(xs[a]):.2f}" y1="{sy(ys[a]):.2f}" '
            f'x2="{sx(xs[b]):.2f}" y2="{sy(ys[b]):.2f}" '
            'stroke="#2a7fff" stroke-width="1.5"/>')
    for i in range(positions.shape[0]):
        h = half_sides[i] * scale
        parts.append(
            f'<rect x="{sx(xs[i]) - h:.2f}" y="{sy(ys[i]) - h:.2f}" '
            f'width="{2 * h:.2f}" height="{2 * h:.2f}" '
            'fill="#ffb347" stroke="#884400" stroke-width="1"/>')
    if pressure is not None and area is not None:
        parts.append(
            f'<text x="10" y="20" font-family="monospace" font-size="14">'
            f'p = {pressure:.3f} Pa, area = {area:.2f} m2</text>')
    parts.append('</svg>')
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
