"""Comparison segmenters: greedy switch reduction, road pass-through,
package clustering (DBSCAN, constrained k-means), grid Louvain, and
geographically constrained label propagation.

Every baseline ends with a connected-component split so its output is a
valid SegmentationMap (total coverage, 4-connected AOIs); cluster methods
can otherwise emit spatially disconnected label regions.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage
from sklearn.cluster import DBSCAN, KMeans
from sklearn.metrics import silhouette_score

from .env import ObjectiveTracker, RewardWeights, _legal_actions_on
from .errors import InputError
from .grid import (
    DELTAS,
    GridCoord,
    SegmentationMap,
    TransferGraph,
    Trajectory,
    build_transfer_graph,
)
from .louvain import louvain

_STRUCT4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def split_disconnected(seg: SegmentationMap) -> SegmentationMap:
    """Give every spatially connected piece of every label its own label.

    Output is canonical (0..K-1, first-appearance row-major).
    """
    out = np.full(seg.shape, -1, dtype=np.int64)
    nxt = 0
    for lab in seg.labels_present():
        mask = seg.labels == lab
        pieces, count = ndimage.label(mask, structure=_STRUCT4)
        for piece in range(1, count + 1):
            out[pieces == piece] = nxt
            nxt += 1
    return SegmentationMap(out).canonical()


def road_seg(road: SegmentationMap) -> SegmentationMap:
    """RoadNetwork baseline: the road partition itself, canonicalized."""
    return road.canonical()


def greedy_seg(
    initial: SegmentationMap | None,
    trajectories: Sequence[Trajectory],
    rows: int | None = None,
    cols: int | None = None,
) -> SegmentationMap:
    """One row-major pass; each cell adopts the neighboring AOI that
    lowers total switches the most (ties keep the current label, then take
    the smallest label). Only connectivity-preserving moves are applied.

    ``initial`` defaults to the all-singleton map over (rows, cols).
    """
    if initial is None:
        if rows is None or cols is None:
            raise InputError("rows/cols required when no initial map is given")
        initial = SegmentationMap.singletons(rows, cols)
    graph = build_transfer_graph(trajectories, initial.rows, initial.cols)
    # the tracker's road term is irrelevant here; a uniform stand-in keeps
    # its contingency bookkeeping well defined
    tracker = ObjectiveTracker(
        initial, graph, SegmentationMap.uniform(initial.rows, initial.cols), RewardWeights()
    )
    labels = tracker.labels
    for r in range(initial.rows):
        for c in range(initial.cols):
            legal = _legal_actions_on(labels, (r, c))
            if not legal[:4].any():
                continue
            own = int(labels[r, c])
            best_label, best_delta = own, 0
            for d, (dr, dc) in enumerate(DELTAS):
                if not legal[d]:
                    continue
                cand = int(labels[r + dr, c + dc])
                if cand == own:
                    continue
                delta = tracker.deltas((r, c), cand)[0]
                if delta < best_delta or (delta == best_delta and best_label != own and cand < best_label):
                    best_label, best_delta = cand, delta
            if best_label != own:
                tracker.move((r, c), best_label)
    return tracker.segmentation()


def _grid_edges(transfer: TransferGraph) -> list[tuple[int, int, float]]:
    """Undirected cell-graph edges: both directional counts summed."""
    rows, cols = transfer.rows, transfer.cols
    w = transfer.weight
    edges = []
    right = w[:, :-1, 3] + w[:, 1:, 2]
    down = w[:-1, :, 1] + w[1:, :, 0]
    for r, c in zip(*np.nonzero(right)):
        u = int(r) * cols + int(c)
        edges.append((u, u + 1, float(right[r, c])))
    for r, c in zip(*np.nonzero(down)):
        u = int(r) * cols + int(c)
        edges.append((u, u + cols, float(down[r, c])))
    return edges


def louvain_grid(transfer: TransferGraph) -> SegmentationMap:
    """Louvain on the trajectory-weighted grid graph; disconnected
    communities are split so the result is a valid map."""
    rows, cols = transfer.rows, transfer.cols
    labels = louvain(rows * cols, _grid_edges(transfer))
    seg = SegmentationMap(np.asarray(labels, dtype=np.int64).reshape(rows, cols))
    return split_disconnected(seg)


def _nearest_centroid_map(
    centroids: np.ndarray,
    priority: np.ndarray,
    rows: int,
    cols: int,
) -> SegmentationMap:
    """Label every cell by its nearest centroid (squared Euclidean on grid
    indices). Exact distance ties go to the higher-priority cluster, then
    the lower cluster index."""
    order = np.lexsort((np.arange(len(centroids)), -priority))
    cents = centroids[order]
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pts = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)
    d2 = ((pts[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    choice = order[np.argmin(d2, axis=1)]
    return SegmentationMap(choice.reshape(rows, cols))


def dbscan_seg(
    packages: Sequence[GridCoord],
    eps: float,
    min_pts: int,
    dims: tuple[int, int],
) -> SegmentationMap:
    """Density clustering of packages; each grid cell joins the nearest
    cluster centroid. Noise packages are ignored. If everything is noise,
    the whole grid degenerates to a single AOI (documented fallback)."""
    if len(packages) == 0:
        raise InputError("dbscan_seg requires at least one package")
    if eps <= 0 or min_pts < 1:
        raise InputError("eps must be positive and min_pts >= 1")
    rows, cols = dims
    points = np.asarray(packages, dtype=np.float64)
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit(points).labels_
    cluster_ids = sorted(set(labels.tolist()) - {-1})
    if not cluster_ids:
        return SegmentationMap.uniform(rows, cols)
    centroids = np.stack([points[labels == cid].mean(axis=0) for cid in cluster_ids])
    counts = np.array([(labels == cid).sum() for cid in cluster_ids])
    seg = _nearest_centroid_map(centroids, counts, rows, cols)
    return split_disconnected(seg)


def ckmeans_seg(
    packages: Sequence[GridCoord],
    k_min: int,
    k_max: int,
    dims: tuple[int, int],
    seed: int = 0,
) -> SegmentationMap:
    """K-means over packages for each k in [k_min, k_max]; the k with the
    best silhouette wins (ties prefer fewer clusters). Cells are labeled by
    nearest centroid; overlap ties favor the cluster holding more packages."""
    if len(packages) == 0:
        raise InputError("ckmeans_seg requires at least one package")
    if not 1 <= k_min <= k_max <= len(packages):
        raise InputError("need 1 <= k_min <= k_max <= package count")
    rows, cols = dims
    points = np.asarray(packages, dtype=np.float64)
    best = None  # (score, k, fitted)
    for k in range(k_min, k_max + 1):
        fitted = KMeans(n_clusters=k, n_init=10, random_state=seed).fit(points)
        if 2 <= k <= len(packages) - 1 and len(set(fitted.labels_.tolist())) > 1:
            score = float(silhouette_score(points, fitted.labels_))
        else:
            score = -1.0
        if best is None or score > best[0] + 1e-12:
            best = (score, k, fitted)
    _, _, fitted = best
    counts = np.bincount(fitted.labels_, minlength=fitted.n_clusters)
    seg = _nearest_centroid_map(fitted.cluster_centers_, counts, rows, cols)
    return split_disconnected(seg)


def gclp_seg(
    transfer: TransferGraph,
    lam: float = 0.5,
    max_iters: int = 50,
) -> SegmentationMap:
    """Geographically constrained label propagation.

    Starting from singletons, every cell repeatedly adopts the label that
    maximizes (incident trajectory weight to that label) - lam * (Euclidean
    distance to that label's centroid), until a full sweep changes nothing
    or ``max_iters`` sweeps ran. Ties keep the current label, then take the
    smallest label. The distance uses the candidate label's running
    centroid with the cell itself excluded.
    """
    if lam < 0:
        raise InputError("lam must be non-negative")
    rows, cols = transfer.rows, transfer.cols
    w = transfer.weight
    labels = np.arange(rows * cols, dtype=np.int64).reshape(rows, cols)
    sums = np.stack(
        [np.arange(rows).repeat(cols), np.tile(np.arange(cols), rows)], axis=1
    ).astype(np.float64)
    counts = np.ones(rows * cols)

    def distance(cell, lab, exclude_own):
        n = counts[lab] - (1.0 if exclude_own else 0.0)
        if n <= 0:
            return 0.0
        cy = (sums[lab, 0] - (cell[0] if exclude_own else 0.0)) / n
        cx = (sums[lab, 1] - (cell[1] if exclude_own else 0.0)) / n
        return float(np.hypot(cell[0] - cy, cell[1] - cx))

    for _ in range(max_iters):
        changed = False
        for r in range(rows):
            for c in range(cols):
                own = int(labels[r, c])
                incident: dict[int, float] = {}
                for d, (dr, dc) in enumerate(DELTAS):
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < rows and 0 <= nc < cols:
                        lab = int(labels[nr, nc])
                        # incident weight: out-edge plus the neighbor's edge back
                        wt = float(w[r, c, d]) + float(w[nr, nc, (1, 0, 3, 2)[d]])
                        incident[lab] = incident.get(lab, 0.0) + wt
                best_lab = own
                best_score = incident.get(own, 0.0) - lam * distance((r, c), own, True)
                for lab in sorted(incident):
                    if lab == own:
                        continue
                    score = incident[lab] - lam * distance((r, c), lab, False)
                    if score > best_score + 1e-12 or (
                        abs(score - best_score) <= 1e-12 and lab < best_lab and best_lab != own
                    ):
                        best_lab, best_score = lab, score
                if best_lab != own:
                    labels[r, c] = best_lab
                    sums[own] -= (r, c)
                    counts[own] -= 1
                    sums[best_lab] += (r, c)
                    counts[best_lab] += 1
                    changed = True
        if not changed:
            break
    return split_disconnected(SegmentationMap(labels))
