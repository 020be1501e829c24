"""Core raster types and utilities: segmentation maps, trajectories,
transfer graphs, road masks, plus 4-connectivity and border helpers.

All types are immutable after construction (backing arrays are marked
read-only) and every operation here is a pure function, so everything in
this module is safe to share across threads.

Conventions used throughout the package:
  * adjacency is strictly 4-neighbor,
  * cells flatten row-major (``index = row * cols + col``),
  * directions are ordered (up, down, left, right).
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

GridCoord = tuple[int, int]

# Direction indices; also the first four action indices of the MDP.
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
DIRECTIONS = (UP, DOWN, LEFT, RIGHT)
DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))
OPPOSITE = (DOWN, UP, RIGHT, LEFT)


class SegmentationMap:
    """M x N raster of AOI labels. Every cell carries exactly one label.

    Labels are non-negative integers; they need not be contiguous (labels
    disappear when an AOI is merged away). ``canonical()`` renumbers to
    0..K-1 in first-appearance row-major order. Negative values are only
    permitted as the road sentinel used transiently by road initialization.
    """

    __slots__ = ("labels",)

    def __init__(self, labels):
        arr = np.ascontiguousarray(labels, dtype=np.int32)
        if arr.ndim != 2 or arr.size == 0:
            raise InputError(f"labels must be a non-empty 2D array, got shape {arr.shape}")
        arr.setflags(write=False)
        self.labels = arr

    @property
    def rows(self) -> int:
        return self.labels.shape[0]

    @property
    def cols(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def label_at(self, cell: GridCoord) -> int:
        return int(self.labels[cell])

    def labels_present(self) -> np.ndarray:
        """Sorted unique labels occurring in the map."""
        return np.unique(self.labels)

    def num_labels(self) -> int:
        return int(self.labels_present().size)

    def with_cell(self, cell: GridCoord, label: int) -> "SegmentationMap":
        """New map with one cell relabeled."""
        out = self.labels.copy()
        out[cell] = label
        return SegmentationMap(out)

    def canonical(self) -> "SegmentationMap":
        """Renumber labels to 0..K-1 in first-appearance row-major order."""
        flat = self.labels.ravel()
        _, first_pos, inverse = np.unique(flat, return_index=True, return_inverse=True)
        # rank of each unique label by its first appearance
        order = np.argsort(first_pos, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        return SegmentationMap(rank[inverse].reshape(self.shape))

    def same_labels(self, other: "SegmentationMap") -> bool:
        return self.shape == other.shape and bool(np.array_equal(self.labels, other.labels))

    def is_valid(self) -> bool:
        """True iff all labels are non-negative and every label's cell set
        is one 4-connected component (total coverage is structural)."""
        if int(self.labels.min()) < 0:
            return False
        return all(is_connected(self, int(lab)) for lab in self.labels_present())

    @staticmethod
    def singletons(rows: int, cols: int) -> "SegmentationMap":
        """Each cell its own AOI, labeled by its flat index."""
        return SegmentationMap(np.arange(rows * cols, dtype=np.int32).reshape(rows, cols))

    @staticmethod
    def uniform(rows: int, cols: int, label: int = 0) -> "SegmentationMap":
        return SegmentationMap(np.full((rows, cols), label, dtype=np.int32))

    def __repr__(self) -> str:
        return f"SegmentationMap({self.rows}x{self.cols}, {self.num_labels()} labels)"


class Trajectory:
    """Time-ordered sequence of flattened grid-cell indices.

    After densification, consecutive entries are distinct and 4-adjacent.
    """

    __slots__ = ("cells",)

    def __init__(self, cells):
        arr = np.ascontiguousarray(cells, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise InputError("trajectory must be a non-empty 1D index sequence")
        arr.setflags(write=False)
        self.cells = arr

    def __len__(self) -> int:
        return int(self.cells.size)

    def coords(self, cols: int) -> np.ndarray:
        """(len, 2) array of (row, col) pairs."""
        return np.stack(divmod(self.cells, cols), axis=1)

    def __repr__(self) -> str:
        return f"Trajectory(len={len(self)})"


class TransferGraph:
    """Directional transition counts derived from trajectories.

    ``weight[i, j, d]`` counts observed transitions from cell (i, j) to its
    neighbor in direction d, over all trajectories. Directions pointing
    off-grid always have weight 0.
    """

    __slots__ = ("weight",)

    def __init__(self, weight):
        arr = np.ascontiguousarray(weight, dtype=np.int64)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise InputError(f"weight must have shape (rows, cols, 4), got {arr.shape}")
        arr.setflags(write=False)
        self.weight = arr

    @property
    def rows(self) -> int:
        return self.weight.shape[0]

    @property
    def cols(self) -> int:
        return self.weight.shape[1]

    def total(self) -> int:
        return int(self.weight.sum())

    def max_weight(self) -> int:
        return int(self.weight.max()) if self.weight.size else 0

    def __add__(self, other: "TransferGraph") -> "TransferGraph":
        return TransferGraph(self.weight + other.weight)

    def __repr__(self) -> str:
        return f"TransferGraph({self.rows}x{self.cols}, total={self.total()})"


class RoadMask:
    """Boolean raster; True marks road pixels."""

    __slots__ = ("cells",)

    def __init__(self, cells):
        arr = np.ascontiguousarray(cells, dtype=bool)
        if arr.ndim != 2 or arr.size == 0:
            raise InputError("mask must be a non-empty 2D boolean array")
        if arr.all():
            raise InputError("road mask must leave at least one non-road cell")
        arr.setflags(write=False)
        self.cells = arr

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]


def build_transfer_graph(trajectories: Iterable[Trajectory], rows: int, cols: int) -> TransferGraph:
    """Tally directional transitions of all trajectories into one raster.

    Trajectories must be densified: every consecutive pair distinct and
    4-adjacent. Additive over trajectory sets.
    """
    weight = np.zeros((rows, cols, 4), dtype=np.int64)
    n = rows * cols
    for traj in trajectories:
        cells = traj.cells
        if cells.min() < 0 or cells.max() >= n:
            raise InputError("trajectory cell index out of bounds")
        if cells.size < 2:
            continue
        src, dst = cells[:-1], cells[1:]
        r1, c1 = np.divmod(src, cols)
        r2, c2 = np.divmod(dst, cols)
        dr, dc = r2 - r1, c2 - c1
        dirs = np.full(src.shape, -1, dtype=np.int64)
        dirs[(dr == -1) & (dc == 0)] = UP
        dirs[(dr == 1) & (dc == 0)] = DOWN
        dirs[(dr == 0) & (dc == -1)] = LEFT
        dirs[(dr == 0) & (dc == 1)] = RIGHT
        if (dirs < 0).any():
            raise InputError("trajectory has non-adjacent or repeated consecutive cells; densify first")
        np.add.at(weight, (r1, c1, dirs), 1)
    return TransferGraph(weight)


def border_cells(seg: SegmentationMap) -> list[GridCoord]:
    """Cells with at least one 4-neighbor in a different AOI, row-major."""
    lab = seg.labels
    differs = np.zeros(lab.shape, dtype=bool)
    differs[1:, :] |= lab[1:, :] != lab[:-1, :]
    differs[:-1, :] |= lab[:-1, :] != lab[1:, :]
    differs[:, 1:] |= lab[:, 1:] != lab[:, :-1]
    differs[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    return [(int(r), int(c)) for r, c in np.argwhere(differs)]


def _mask_connected(mask: np.ndarray) -> bool:
    """True iff the True cells of ``mask`` form one 4-connected component.

    An empty mask counts as connected.
    """
    total = int(mask.sum())
    if total <= 1:
        return True
    rows, cols = mask.shape
    start = np.argwhere(mask)[0]
    seen = np.zeros_like(mask)
    seen[start[0], start[1]] = True
    queue = deque([(int(start[0]), int(start[1]))])
    reached = 1
    while queue:
        r, c = queue.popleft()
        for dr, dc in DELTAS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and mask[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                reached += 1
                queue.append((nr, nc))
    return reached == total


def is_connected(seg: SegmentationMap, label: int) -> bool:
    """True iff the label's cell set is a single 4-connected component."""
    mask = seg.labels == label
    if not mask.any():
        raise InputError(f"label {label} does not occur in the map")
    return _mask_connected(mask)


def densify(raw: Sequence[GridCoord], rows: int, cols: int) -> Trajectory:
    """Join consecutive non-adjacent points with a deterministic L-path
    (rows stepped first), collapsing consecutive duplicates.

    Such paths have exactly Manhattan length, i.e. they are 4-neighbor
    shortest paths.
    """
    if not raw:
        raise InputError("cannot densify an empty point list")
    for r, c in raw:
        if not (0 <= r < rows and 0 <= c < cols):
            raise InputError(f"point ({r}, {c}) outside {rows}x{cols} grid")
    out: list[int] = [raw[0][0] * cols + raw[0][1]]
    for (r0, c0), (r1, c1) in zip(raw, raw[1:]):
        r, c = r0, c0
        while r != r1:
            r += 1 if r1 > r else -1
            out.append(r * cols + c)
        while c != c1:
            c += 1 if c1 > c else -1
            out.append(r * cols + c)
    collapsed = [out[0]]
    for idx in out[1:]:
        if idx != collapsed[-1]:
            collapsed.append(idx)
    return Trajectory(collapsed)


def neighbors4(cell: GridCoord, rows: int, cols: int) -> list[GridCoord]:
    """In-bounds 4-neighbors, in (up, down, left, right) order."""
    r, c = cell
    out = []
    for dr, dc in DELTAS:
        nr, nc = r + dr, c + dc
        if 0 <= nr < rows and 0 <= nc < cols:
            out.append((nr, nc))
    return out
