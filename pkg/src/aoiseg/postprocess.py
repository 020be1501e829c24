"""Post-processing: repair fragmented segmentations by merging AOIs whose
coarsened trajectory flow puts them in one Louvain community.

Only spatially adjacent AOIs of a community are merged (via connected
components of the community's adjacency subgraph), so validity is
preserved even when Louvain groups non-adjacent AOIs.
"""

from __future__ import annotations

import numpy as np

from .grid import SegmentationMap, TransferGraph, DELTAS
from .louvain import louvain
from .synth import adjacent_label_pairs


def coarsen(seg: SegmentationMap, transfer: TransferGraph) -> tuple[list[int], dict[tuple[int, int], int]]:
    """Collapse the transfer graph to AOI-level nodes.

    Returns (labels, edges): the present AOI labels and, for each unordered
    label pair, the total transition count across their shared boundary in
    both directions. Self-loops (intra-AOI flow) are dropped.
    """
    lab = seg.labels
    rows, cols = lab.shape
    edges: dict[tuple[int, int], int] = {}
    w = transfer.weight
    for d, (dr, dc) in enumerate(DELTAS):
        src_r = slice(max(0, -dr), rows - max(0, dr))
        src_c = slice(max(0, -dc), cols - max(0, dc))
        dst_r = slice(max(0, dr), rows - max(0, -dr))
        dst_c = slice(max(0, dc), cols - max(0, -dc))
        a = lab[src_r, src_c].ravel()
        b = lab[dst_r, dst_c].ravel()
        weights = w[src_r, src_c, d].ravel()
        cross = a != b
        for u, v, wt in zip(a[cross], b[cross], weights[cross]):
            if wt:
                key = (int(min(u, v)), int(max(u, v)))
                edges[key] = edges.get(key, 0) + int(wt)
    labels = [int(x) for x in seg.labels_present()]
    return labels, edges


def post_process(seg: SegmentationMap, transfer: TransferGraph) -> SegmentationMap:
    """Merge AOIs that share a Louvain community on the coarsened graph.

    Within each community only spatially adjacent members merge: the
    community's AOI-adjacency subgraph is split into connected components
    and each component becomes one AOI (keeping its smallest label), so
    the output is valid and equals the input when no flow links AOIs.
    """
    labels, edges = coarsen(seg, transfer)
    index = {lab: i for i, lab in enumerate(labels)}
    community = louvain(
        len(labels), [(index[a], index[b], float(w)) for (a, b), w in edges.items()]
    )

    adjacency = {pair for pair in adjacent_label_pairs(seg)}
    parent = {lab: lab for lab in labels}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in sorted(adjacency):
        if community[index[a]] == community[index[b]]:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    lut = np.zeros(int(seg.labels.max()) + 1, dtype=np.int64)
    for lab in labels:
        lut[lab] = find(lab)
    return SegmentationMap(lut[seg.labels])


def post_process_fixpoint(
    seg: SegmentationMap, transfer: TransferGraph, max_rounds: int = 5
) -> SegmentationMap:
    """Iterate post_process until it stops changing the map, bounded by
    ``max_rounds`` (Louvain on the re-coarsened graph may find further
    merges)."""
    current = seg
    for _ in range(max_rounds):
        merged = post_process(current, transfer)
        if merged.same_labels(current):
            break
        current = merged
    return current
