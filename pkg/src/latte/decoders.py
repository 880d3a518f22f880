"""Inner-window decoders: union-find reference, exact minimum-weight oracle,
and the 2-D seam decoder used by block merging.

All decoders consume a MatchGraph and a set of fired detector nodes and
return a syndrome-consistent Correction: applying the correction's edges
cancels every defect, matching leftovers to the virtual boundary.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .code_model import BOUNDARY, MatchGraph

MITM_MAX_EDGES = 30
TJOIN_MAX_DEFECTS = 12

_INF = float("inf")


class DecodeContractError(ValueError):
    """A defect fell outside the graph handed to the decoder."""


class InstanceTooLargeError(ValueError):
    """exact_decode_small got an instance beyond its size preconditions."""


class IsolatedDefectError(RuntimeError):
    """A defect has no path to another defect or the boundary; the model
    handed to the decoder is malformed."""


@dataclass(frozen=True)
class Correction:
    edges: tuple
    logical_flip: int
    weight: int

    @classmethod
    def empty(cls) -> "Correction":
        return cls(edges=(), logical_flip=0, weight=0)


def _check_defects(graph: MatchGraph, defects) -> list:
    out = sorted({int(d) for d in defects})
    if out and (out[0] < 0 or out[-1] >= graph.n_nodes):
        raise DecodeContractError(
            f"defect outside graph (n_nodes={graph.n_nodes})")
    return out


def _finish(graph: MatchGraph, edges: Iterable[int]) -> Correction:
    chosen = tuple(sorted(set(int(e) for e in edges)))
    mask = np.uint64(0)
    for e in chosen:
        mask ^= graph.masks[e]
    weight = int(sum(int(graph.weights[e]) for e in chosen))
    return Correction(edges=chosen, logical_flip=int(mask), weight=weight)


def residual_defects(graph: MatchGraph, defects,
                     correction: Correction) -> list:
    """Defects left after applying a correction (empty for a valid one)."""
    bits = {int(d) for d in defects}
    for e in correction.edges:
        for node in (graph.edges_u[e], graph.edges_v[e]):
            if node == BOUNDARY:
                continue
            node = int(node)
            bits.symmetric_difference_update({node})
    return sorted(bits)


# -- union-find reference decoder -------------------------------------------

def uf_decode(graph: MatchGraph, defects) -> Correction:
    """Weighted union-find: grow odd clusters in half-edge weight units,
    merge on contact, then peel the grown forest into a correction."""
    defects = _check_defects(graph, defects)
    if not defects:
        return Correction.empty()
    offs, eidx, _ = graph.adjacency()
    weights = graph.weights
    eu, ev = graph.edges_u, graph.edges_v

    parent, size, parity, bhit, members = {}, {}, {}, {}, {}
    support = {}

    def make(x, par):
        if x not in parent:
            parent[x] = x
            size[x] = 1
            parity[x] = par
            bhit[x] = False
            members[x] = [x]

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            return ra
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        parity[ra] += parity[rb]
        bhit[ra] = bhit[ra] or bhit[rb]
        members[ra].extend(members.pop(rb))
        return ra

    for d in defects:
        make(d, 1)

    while True:
        active = sorted(r for r in members
                        if parity[r] % 2 == 1 and not bhit[r])
        if not active:
            break
        cand = {}
        for r in active:
            for u in members[r]:
                for j in range(offs[u], offs[u + 1]):
                    e = int(eidx[j])
                    if support.get(e, 0) < weights[e]:
                        cand[e] = cand.get(e, 0) + 1
        if not cand:
            raise IsolatedDefectError(
                "odd cluster with no growable edges")
        step = min(-(-(int(weights[e]) - support.get(e, 0)) // sides)
                   for e, sides in cand.items())
        completed = []
        for e, sides in cand.items():
            support[e] = support.get(e, 0) + sides * step
            if support[e] >= weights[e]:
                completed.append(e)
        for e in sorted(completed):
            u, v = int(eu[e]), int(ev[e])
            if v == BOUNDARY:
                make(u, 0)
                bhit[find(u)] = True
            else:
                make(u, 0)
                make(v, 0)
                union(u, v)

    # peeling over the fully grown forest
    erasure = sorted(e for e, s in support.items() if s >= weights[e])
    adj = {}
    boundary_attach = []
    for e in erasure:
        u, v = int(eu[e]), int(ev[e])
        if v == BOUNDARY:
            boundary_attach.append((u, e))
        else:
            adj.setdefault(u, []).append((e, v))
            adj.setdefault(v, []).append((e, u))

    visited = set()
    order = []
    parent_edge = {}
    parent_node = {}

    def bfs(root, root_edge):
        visited.add(root)
        parent_edge[root] = root_edge
        parent_node[root] = BOUNDARY if root_edge is not None else None
        queue = [root]
        order.append(root)
        while queue:
            u = queue.pop(0)
            for e, w in sorted(adj.get(u, ())):
                if w not in visited:
                    visited.add(w)
                    parent_edge[w] = e
                    parent_node[w] = u
                    order.append(w)
                    queue.append(w)

    for u, e in sorted(boundary_attach):
        if u not in visited:
            bfs(u, e)
    for u in sorted(set(adj) | set(defects)):
        if u not in visited:
            bfs(u, None)

    flag = {d: True for d in defects}
    chosen = []
    for u in reversed(order):
        if flag.get(u):
            pe = parent_edge[u]
            if pe is None:
                raise IsolatedDefectError(
                    f"defect {u} unreachable from boundary or partner")
            chosen.append(pe)
            pu = parent_node[u]
            if pu != BOUNDARY:
                flag[pu] = not flag.get(pu, False)
            flag[u] = False
    return _finish(graph, chosen)


# -- exact minimum-weight decoding -------------------------------------------

def _edge_syndrome_bits(graph, node_bit):
    out = []
    for e in range(graph.n_edges):
        s = node_bit[int(graph.edges_u[e])]
        v = int(graph.edges_v[e])
        if v != BOUNDARY:
            s ^= node_bit[v]
        out.append(s)
    return out


def _exact_mitm(graph: MatchGraph, defects) -> Correction:
    """Exhaustive search over edge subsets, meet-in-the-middle halves.
    Ties broken toward the lexicographically smallest edge-id set."""
    touched = sorted({int(graph.edges_u[e]) for e in range(graph.n_edges)}
                     | {int(graph.edges_v[e]) for e in range(graph.n_edges)
                        if graph.edges_v[e] != BOUNDARY}
                     | set(defects))
    node_bit = {u: 1 << i for i, u in enumerate(touched)}
    target = 0
    for d in defects:
        target ^= node_bit[d]
    esyn = _edge_syndrome_bits(graph, node_bit)
    w = [int(x) for x in graph.weights]

    def subsets(ids):
        m = len(ids)
        syn = [0] * (1 << m)
        wt = [0] * (1 << m)
        for mask in range(1, 1 << m):
            lb = mask & -mask
            i = lb.bit_length() - 1
            syn[mask] = syn[mask ^ lb] ^ esyn[ids[i]]
            wt[mask] = wt[mask ^ lb] + w[ids[i]]
        return syn, wt

    def mask_edges(mask, ids):
        return tuple(ids[i] for i in range(len(ids)) if mask >> i & 1)

    n = graph.n_edges
    ids_a = list(range(n // 2))
    ids_b = list(range(n // 2, n))
    syn_a, wt_a = subsets(ids_a)
    syn_b, wt_b = subsets(ids_b)
    best_b = {}
    for mask in range(1 << len(ids_b)):
        key = syn_b[mask]
        cand = (wt_b[mask], mask_edges(mask, ids_b))
        cur = best_b.get(key)
        if cur is None or cand < cur:
            best_b[key] = cand
    best = None
    for mask in range(1 << len(ids_a)):
        match = best_b.get(target ^ syn_a[mask])
        if match is None:
            continue
        cand = (wt_a[mask] + match[0],
                tuple(sorted(mask_edges(mask, ids_a) + match[1])))
        if best is None or cand < best:
            best = cand
    if best is None:
        raise IsolatedDefectError("syndrome unreachable by any edge subset")
    return _finish(graph, best[1])


def _dijkstra(graph: MatchGraph, source: int):
    offs, eidx, oth = graph.adjacency()
    dist = {source: 0}
    pred = {}
    best_boundary = (_INF, None, None)     # (cost, exit node, boundary edge)
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, _INF):
            continue
        for j in range(offs[u], offs[u + 1]):
            e = int(eidx[j])
            v = int(oth[j])
            nd = d + int(graph.weights[e])
            if v == BOUNDARY:
                if (nd, u, e) < best_boundary:
                    best_boundary = (nd, u, e)
                continue
            if nd < dist.get(v, _INF):
                dist[v] = nd
                pred[v] = (u, e)
                heapq.heappush(heap, (nd, v))
    return dist, pred, best_boundary


def _walk(pred, src, dst):
    edges = []
    u = dst
    while u != src:
        u, e = pred[u]
        edges.append(e)
    return edges


def _exact_tjoin(graph: MatchGraph, defects) -> Correction:
    k = len(defects)
    dij = [_dijkstra(graph, d) for d in defects]
    pair_cost = [[_INF] * k for _ in range(k)]
    for i in range(k):
        dist = dij[i][0]
        for j in range(i + 1, k):
            pair_cost[i][j] = dist.get(defects[j], _INF)
    bdry_cost = [dij[i][2][0] for i in range(k)]

    memo = {}

    def solve(done):
        if done == (1 << k) - 1:
            return 0, ()
        if done in memo:
            return memo[done]
        i = next(b for b in range(k) if not done >> b & 1)
        best = (_INF, ())
        if bdry_cost[i] < _INF:
            sub = solve(done | 1 << i)
            cand = (bdry_cost[i] + sub[0], (("b", i),) + sub[1])
            if cand[0] < best[0]:
                best = cand
        for j in range(i + 1, k):
            if done >> j & 1 or pair_cost[i][j] == _INF:
                continue
            sub = solve(done | 1 << i | 1 << j)
            cand = (pair_cost[i][j] + sub[0], (("p", i, j),) + sub[1])
            if cand[0] < best[0]:
                best = cand
        memo[done] = best
        return best

    total, plan = solve(0)
    if total == _INF:
        raise IsolatedDefectError("some defect cannot be matched")
    chosen = set()
    for item in plan:
        if item[0] == "p":
            _, i, j = item
            chosen.symmetric_difference_update(
                _walk(dij[i][1], defects[i], defects[j]))
        else:
            _, i = item
            _, exit_node, bedge = dij[i][2]
            chosen.symmetric_difference_update(
                _walk(dij[i][1], defects[i], exit_node))
            chosen.symmetric_difference_update({bedge})
    return _finish(graph, chosen)


def exact_decode_small(graph: MatchGraph, defects) -> Correction:
    """Globally minimum-weight correction for small instances.

    Accepts graphs with at most 30 edges (exhaustive meet-in-the-middle)
    or instances with at most 12 defects (exact T-join over shortest
    paths); anything bigger raises InstanceTooLargeError.
    """
    defects = _check_defects(graph, defects)
    if not defects:
        return Correction.empty()
    if graph.n_edges <= MITM_MAX_EDGES:
        return _exact_mitm(graph, defects)
    if len(defects) <= TJOIN_MAX_DEFECTS:
        return _exact_tjoin(graph, defects)
    raise InstanceTooLargeError(
        f"{graph.n_edges} edges and {len(defects)} defects exceed the "
        f"exact decoder's bounds")


def decode_seam_2d(seam_graph: MatchGraph, seam_defects,
                   decoder: Optional[Callable] = None) -> Correction:
    """Decode the XORed seam syndrome on the 2-D interface graph."""
    decoder = decoder or uf_decode
    return decoder(seam_graph, _check_defects(seam_graph, seam_defects))


DECODERS = {
    "uf": uf_decode,
    "exact": exact_decode_small,
}
