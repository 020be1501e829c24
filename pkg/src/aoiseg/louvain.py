"""Louvain community detection on weighted undirected graphs.

Deterministic variant: nodes are swept in ascending id order, candidate
communities in ascending id order, and a move is taken only on a strict
modularity gain, so identical inputs always yield identical partitions.
The two classic phases (local moves, then graph aggregation) repeat until
no gain is possible at any level.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .errors import InputError

Edge = tuple[int, int, float]


def _build_adjacency(n_nodes: int, edges: Iterable[Edge]):
    """Adjacency dicts plus self-loop weights; parallel edges accumulate."""
    adj: list[dict[int, float]] = [dict() for _ in range(n_nodes)]
    loops = [0.0] * n_nodes
    for u, v, w in edges:
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise InputError(f"edge ({u}, {v}) outside node range")
        if w < 0:
            raise InputError("edge weights must be non-negative")
        if w == 0:
            continue
        if u == v:
            loops[u] += w
        else:
            adj[u][v] = adj[u].get(v, 0.0) + w
            adj[v][u] = adj[v].get(u, 0.0) + w
    return adj, loops


def modularity(n_nodes: int, edges: Iterable[Edge], labels: Sequence[int]) -> float:
    """Newman modularity of a node partition.

    Q = sum_c [ in_c / m - (deg_c / 2m)^2 ], where in_c is the total weight
    of intra-community edges (self-loops once), deg_c the summed degrees
    (self-loops twice) and m the total edge weight.
    """
    adj, loops = _build_adjacency(n_nodes, edges)
    m = sum(sum(d.values()) for d in adj) / 2.0 + sum(loops)
    if m == 0:
        return 0.0
    inw: dict[int, float] = {}
    deg: dict[int, float] = {}
    for u in range(n_nodes):
        c = labels[u]
        k = sum(adj[u].values()) + 2.0 * loops[u]
        deg[c] = deg.get(c, 0.0) + k
        inw[c] = inw.get(c, 0.0) + loops[u]
        for v, w in adj[u].items():
            if v > u and labels[v] == c:
                inw[c] = inw.get(c, 0.0) + w
    return sum(inw.get(c, 0.0) / m - (deg[c] / (2.0 * m)) ** 2 for c in deg)


def _one_level(adj, loops, m, init=None):
    """Local-move phase; returns (node->community, moved_any).

    ``init`` seeds the starting partition (defaults to singletons), which
    lets the caller refine an existing partition at fine granularity.
    """
    n = len(adj)
    node2com = list(range(n)) if init is None else list(init)
    degree = [sum(adj[u].values()) + 2.0 * loops[u] for u in range(n)]
    com_tot: dict[int, float] = {}
    for u in range(n):
        c = node2com[u]
        com_tot[c] = com_tot.get(c, 0.0) + degree[u]
    fresh = max(node2com) + 1  # unused id for strictly-better isolation moves

    moved_any = False
    improving = True
    while improving:
        improving = False
        for u in range(n):
            cu = node2com[u]
            neigh: dict[int, float] = {}
            for v, w in adj[u].items():
                neigh[node2com[v]] = neigh.get(node2com[v], 0.0) + w
            com_tot[cu] -= degree[u]

            def gain(c):
                # modularity gain of joining c, up to the constant 1/m
                return neigh.get(c, 0.0) - com_tot.get(c, 0.0) * degree[u] / (2.0 * m)

            best_com, best_gain = cu, gain(cu)
            for c in sorted(neigh):
                if c == cu:
                    continue
                g = gain(c)
                if g > best_gain + 1e-12:
                    best_com, best_gain = c, g
            if 0.0 > best_gain + 1e-12:
                # strictly better off alone in a fresh community
                best_com, best_gain = fresh, 0.0
                fresh += 1
            com_tot[best_com] = com_tot.get(best_com, 0.0) + degree[u]
            node2com[u] = best_com
            if best_com != cu:
                improving = True
                moved_any = True
    return node2com, moved_any


def _best_split(members, adj, loops, m, degree):
    """Best 2-way split of one community by global modularity delta.

    Splitting C into (A, B) changes modularity by
        dQ = -cut(A, B) / m + deg_A * deg_B / (2 m^2),
    so the search only needs intra-community edges and degree sums. Returns
    (gain, member subset A) or (0.0, None). Exhaustive over bipartitions,
    so callers must keep communities small (2^(|C|-1) candidates).
    """
    s = len(members)
    if s < 2:
        return 0.0, None
    index = {u: i for i, u in enumerate(members)}
    internal = []
    for u in members:
        for v, w in adj[u].items():
            if v in index and v > u:
                internal.append((index[u], index[v], w))
    degs = [degree[u] for u in members]
    best_gain, best_subset = 0.0, None
    for bits in range(1, 1 << (s - 1)):  # member 0 stays in B; halves the space
        deg_a = sum(degs[i] for i in range(s) if bits >> i & 1)
        deg_b = sum(degs) - deg_a
        cut = sum(w for i, j, w in internal if (bits >> i & 1) != (bits >> j & 1))
        gain = -cut / m + deg_a * deg_b / (2.0 * m * m)
        if gain > best_gain + 1e-12:
            best_gain = gain
            best_subset = [members[i] for i in range(s) if bits >> i & 1]
    return best_gain, best_subset


_MAX_SPLIT_SIZE = 12


def _split_phase(adj, loops, m, assignment):
    """Split any community whose best exact 2-way split has positive gain.

    Communities larger than _MAX_SPLIT_SIZE are skipped (exhaustive search
    would blow up); single-node and aggregation moves still apply to them.
    """
    members_of: dict[int, list[int]] = {}
    for u, c in enumerate(assignment):
        members_of.setdefault(c, []).append(u)
    degree = [sum(adj[u].values()) + 2.0 * loops[u] for u in range(len(adj))]
    fresh = max(assignment) + 1
    moved = False
    for c in sorted(members_of):
        members = members_of[c]
        if len(members) > _MAX_SPLIT_SIZE:
            continue
        gain, subset = _best_split(members, adj, loops, m, degree)
        if subset is not None:
            for u in subset:
                assignment[u] = fresh
            fresh += 1
            moved = True
    return assignment, moved


def _renumber(labels: Sequence[int]) -> list[int]:
    """First-appearance renumbering to 0..C-1."""
    mapping: dict[int, int] = {}
    out = []
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out.append(mapping[lab])
    return out


def _aggregate(adj, loops, node2com):
    """Collapse communities into nodes; returns (new_adj, new_loops, count)."""
    count = max(node2com) + 1
    new_adj: list[dict[int, float]] = [dict() for _ in range(count)]
    new_loops = [0.0] * count
    for u in range(len(adj)):
        cu = node2com[u]
        new_loops[cu] += loops[u]
        for v, w in adj[u].items():
            cv = node2com[v]
            if cv == cu:
                if v > u:
                    new_loops[cu] += w
            elif v > u:
                new_adj[cu][cv] = new_adj[cu].get(cv, 0.0) + w
                new_adj[cv][cu] = new_adj[cv].get(cu, 0.0) + w
    return new_adj, new_loops, count


def louvain(n_nodes: int, edges: Iterable[Edge]) -> list[int]:
    """Partition nodes by modularity maximization.

    Standard two-phase Louvain (local moves, aggregation) plus two
    refinements that run until no modularity-increasing move exists at any
    granularity: single-node moves retried on the original graph, and exact
    2-way splits of small communities. Both only ever apply strict gains,
    so the result is at least as good as classic Louvain's.

    Returns per-node community labels, renumbered 0..C-1 in node order.
    An edgeless graph yields all-singleton communities.
    """
    if n_nodes <= 0:
        return []
    adj0, loops0 = _build_adjacency(n_nodes, edges)
    m = sum(sum(d.values()) for d in adj0) / 2.0 + sum(loops0)
    if m == 0:
        return list(range(n_nodes))

    assignment = list(range(n_nodes))
    while True:
        node2com, moved_fine = _one_level(adj0, loops0, m, init=assignment)
        assignment = _renumber(node2com)

        adj, loops, count = _aggregate(adj0, loops0, assignment)
        moved_coarse = False
        while True:
            node2com, moved = _one_level(adj, loops, m)
            if not moved:
                break
            moved_coarse = True
            node2com = _renumber(node2com)
            assignment = [node2com[assignment[u]] for u in range(n_nodes)]
            adj, loops, new_count = _aggregate(adj, loops, node2com)
            if new_count == count:
                break
            count = new_count

        assignment, moved_split = _split_phase(adj0, loops0, m, assignment)
        if moved_split:
            assignment = _renumber(assignment)
        if not (moved_fine or moved_coarse or moved_split):
            break
    return _renumber(assignment)
