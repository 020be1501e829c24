"""Initial AOI partition from a rasterized road image.

Pipeline: grayscale raster -> binary road mask (roads are dark) ->
4-connected components of the non-road cells -> iterative contour
expansion that absorbs the road cells into their nearest region.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import InputError
from .grid import RoadMask, SegmentationMap

# Label carried by road cells between components() and expand().
ROAD_SENTINEL = -1

# 4-connectivity structuring element for scipy.ndimage.label.
_STRUCT4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class GrayRaster:
    """M x N grayscale intensities in [0, 255]."""

    __slots__ = ("intensity",)

    def __init__(self, intensity):
        arr = np.ascontiguousarray(intensity)
        if arr.ndim != 2 or arr.size == 0:
            raise InputError("raster must be a non-empty 2D array")
        if arr.min() < 0 or arr.max() > 255:
            raise InputError("intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        self.intensity = arr

    @property
    def rows(self) -> int:
        return self.intensity.shape[0]

    @property
    def cols(self) -> int:
        return self.intensity.shape[1]


def threshold(raster: GrayRaster, cutoff: int) -> RoadMask:
    """Binary road mask: a cell is road iff its intensity <= cutoff."""
    if not 0 <= cutoff <= 255:
        raise InputError(f"cutoff must be in [0, 255], got {cutoff}")
    return RoadMask(raster.intensity <= cutoff)


def components(mask: RoadMask) -> SegmentationMap:
    """Label each maximal 4-connected non-road region; road cells get the
    sentinel label.

    Region labels are 0..K-1 in first-appearance row-major order.
    """
    non_road = ~mask.cells
    if not non_road.any():
        raise InputError("mask is all road; no regions to label")
    labeled, count = ndimage.label(non_road, structure=_STRUCT4)
    # renumber to first-appearance row-major order; road cells get the sentinel
    order = np.full(count + 1, ROAD_SENTINEL, dtype=np.int64)
    seen = 0
    for lab in labeled.ravel():
        if lab > 0 and order[lab] < 0:
            order[lab] = seen
            seen += 1
            if seen == count:
                break
    return SegmentationMap(order[labeled])


def expand(seg: SegmentationMap) -> SegmentationMap:
    """Assign every sentinel cell the label of its nearest labeled region.

    Synchronous one-ring dilation: per iteration every sentinel cell with a
    labeled 4-neighbor takes the smallest such neighbor label, so each cell
    ends up at minimal BFS distance from its assigned region and ties break
    toward the smallest label. Labeled cells are never relabeled.
    """
    lab = seg.labels.astype(np.int64)
    if not (lab >= 0).any():
        raise InputError("expand requires at least one labeled cell")
    big = np.iinfo(np.int64).max
    while (lab < 0).any():
        src = np.where(lab >= 0, lab, big)
        best = np.full(lab.shape, big, dtype=np.int64)
        best[1:, :] = np.minimum(best[1:, :], src[:-1, :])
        best[:-1, :] = np.minimum(best[:-1, :], src[1:, :])
        best[:, 1:] = np.minimum(best[:, 1:], src[:, :-1])
        best[:, :-1] = np.minimum(best[:, :-1], src[:, 1:])
        frontier = (lab < 0) & (best < big)
        lab[frontier] = best[frontier]
    return SegmentationMap(lab)


def partition_from_raster(raster: GrayRaster, cutoff: int = 128) -> SegmentationMap:
    """Full pipeline: threshold, label components, expand over road cells."""
    return expand(components(threshold(raster, cutoff)))
