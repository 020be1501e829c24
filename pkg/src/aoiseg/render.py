"""Static map rendering: one color per AOI, optional trajectory overlay."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .grid import SegmentationMap, Trajectory

# Fixed 32-color palette; labels beyond 32 cycle.
PALETTE = np.array(
    [
        (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
        (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
        (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
        (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
        (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
        (255, 255, 255), (90, 50, 120), (255, 105, 97), (119, 221, 119),
        (174, 198, 207), (253, 253, 150), (203, 153, 201), (100, 20, 100),
        (45, 85, 135), (185, 90, 60), (20, 160, 90), (200, 200, 90),
    ],
    dtype=np.uint8,
)


def _line_pixels(y0: int, x0: int, y1: int, x1: int):
    """Integer line between two pixels (row, col), inclusive."""
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        yield y0, x0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def render_map(
    seg: SegmentationMap,
    trajectories: Sequence[Trajectory] = (),
    scale: int = 20,
) -> np.ndarray:
    """(rows*scale, cols*scale, 3) uint8 image; AOIs colored from the fixed
    palette (cycling past 32 labels), trajectories drawn as black polylines
    through cell centers. Deterministic bytes for identical inputs."""
    canon = seg.canonical()
    colors = PALETTE[canon.labels % len(PALETTE)]
    img = np.repeat(np.repeat(colors, scale, axis=0), scale, axis=1).copy()
    half = scale // 2
    for traj in trajectories:
        pts = traj.coords(seg.cols)
        centers = [(int(r) * scale + half, int(c) * scale + half) for r, c in pts]
        for (y0, x0), (y1, x1) in zip(centers, centers[1:]):
            for y, x in _line_pixels(y0, x0, y1, x1):
                img[y, x] = (0, 0, 0)
        if len(centers) == 1:
            img[centers[0][0], centers[0][1]] = (0, 0, 0)
    return img
