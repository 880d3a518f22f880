"""Core+buffer block partitioning, window decoding, and seam merging.

A block decodes its core plus b buffer layers. Matched edges whose anchor
layer (earliest detector in time, or leftmost in space for spatial blocks)
falls inside the core are committed; matched edges crossing a commit plane
are projected as residual defect bits onto the far-side boundary layer,
forming the block's seam toward that neighbor. Merging XORs the two facing
seams and decodes the difference on the 2-D interface graph, so the blocks'
committed chains join up with the correct logical bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from .code_model import BOUNDARY, DecodingModel, MatchGraph, ModelError
from .decoders import Correction, uf_decode

LARGE_PRIME = 1_000_003


def hash_slot(block_id: tuple, table_size: int) -> int:
    """Block address -> storage slot."""
    region, window = block_id
    return (region * LARGE_PRIME + window) % table_size


@dataclass
class Block:
    id: tuple                    # (region, window)
    kind: str                    # "temporal" | "spatial"
    region: int
    t_core: tuple                # [lo, hi) rounds
    t_window: tuple              # [lo, hi) rounds including buffers
    gx_core: tuple               # [lo, hi] inclusive grid columns
    gx_window: tuple             # [lo, hi] inclusive grid columns
    neighbors: tuple = ()
    state: str = "pending"       # pending | decoding | finished

    @property
    def ready_round(self) -> int:
        """Last round index whose arrival makes this block decodable."""
        return self.t_window[1] - 1


@dataclass(frozen=True)
class SeamCorrection:
    block: tuple
    side: tuple                  # the (earlier, later) seam pair id
    bits: np.ndarray


@dataclass
class LogicalFrame:
    """Order-free XOR accumulator with a per-contributor audit log."""

    bits: int = 0
    audit: dict = field(default_factory=dict)

    def fold(self, contributor, mask: int) -> None:
        if contributor in self.audit:
            raise ValueError(f"duplicate frame contribution {contributor}")
        self.audit[contributor] = int(mask)
        self.bits ^= int(mask)

    def restrict(self, contributors) -> int:
        out = 0
        for c in contributors:
            out ^= self.audit.get(c, 0)
        return out


@dataclass
class BlockResult:
    block: tuple
    logical_mask: int
    seams: dict                  # pair id -> np.ndarray bits
    n_defects: int
    n_matched_edges: int
    work_weight: int


class _Seam:
    """Descriptor of one block interface: node order, per-basis 2-D
    graphs, and the projection index."""

    def __init__(self, pair, axis, cut, det_ids, det_index, graphs):
        self.pair = pair             # (earlier block id, later block id)
        self.axis = axis             # "time" | "space"
        self.cut = cut               # plane coordinate (round or column)
        self.det_ids = det_ids       # global detector ids, node order
        self.det_index = det_index   # global det id -> bit position
        self.graphs = graphs         # basis -> (MatchGraph, det->local)

    @property
    def size(self):
        return len(self.det_ids)


class BlockSet:
    """Partition of a model into core+buffer blocks plus seam descriptors."""

    def __init__(self, model: DecodingModel, d: int, b: int):
        if b < 1:
            raise ModelError("buffer depth must be >= 1")
        if b >= d:
            raise ModelError(
                f"buffer depth {b} must stay below the core extent {d}")
        self.model = model
        self.d = d
        self.b = b
        gamma = model.gamma
        geometry = model.geometry
        self.n_windows = max(1, math.ceil(gamma / d))

        # region bands and spatial adjacency (edges spanning two regions)
        self.bands = {}
        for pos, region in geometry.regions.items():
            lo, hi = self.bands.get(region, (pos[0], pos[0]))
            self.bands[region] = (min(lo, pos[0]), max(hi, pos[0]))
        self.n_regions = geometry.num_regions
        det_region = np.array([det.patch for det in model.detectors])
        adjacent = set()
        offs = model.edge_det_offsets
        flat = model.edge_det_flat
        for e in range(len(model.edges)):
            regs = set(det_region[flat[offs[e]:offs[e + 1]]])
            if len(regs) > 1:
                lo, hi = min(regs), max(regs)
                adjacent.add((lo, hi))
        self.spatial_pairs = sorted(adjacent)
        if self.spatial_pairs and self.n_windows > 1:
            raise ModelError(
                "combined spatial and temporal partitions are unsupported; "
                "merged layouts must fit one temporal window")

        kind = "spatial" if self.spatial_pairs else "temporal"
        self.blocks = {}
        for r in range(self.n_regions):
            band = self.bands[r]
            for w in range(self.n_windows):
                t_lo, t_hi = w * d, min((w + 1) * d, gamma)
                t_window = (max(0, t_lo - b), min(gamma, t_hi + b))
                if kind == "spatial":
                    gxw = (band[0] - b, band[1] + b)
                    t_window = (t_lo, t_hi)
                else:
                    gxw = band
                self.blocks[(r, w)] = Block(
                    id=(r, w), kind=kind, region=r,
                    t_core=(t_lo, t_hi), t_window=t_window,
                    gx_core=band, gx_window=gxw)

        self.pairs = []
        for r in range(self.n_regions):
            for w in range(self.n_windows - 1):
                self.pairs.append(((r, w), (r, w + 1)))
        for (r0, r1) in self.spatial_pairs:
            for w in range(self.n_windows):
                self.pairs.append(((r0, w), (r1, w)))
        neighbor_map = {bid: [] for bid in self.blocks}
        for a, b_ in self.pairs:
            neighbor_map[a].append(b_)
            neighbor_map[b_].append(a)
        for bid, blk in self.blocks.items():
            blk.neighbors = tuple(sorted(neighbor_map[bid]))

        self._subgraph_meta = {}
        self._window_cache = {}
        self._seam_graph_cache = {}
        self.seams = {p: self._build_seam(p) for p in self.pairs}

    # -- helpers ---------------------------------------------------------

    def _meta(self, basis):
        """Per-node (round, gx, region) arrays of a basis subgraph."""
        if basis not in self._subgraph_meta:
            g = self.model.subgraph(basis)
            regions = self.model.geometry.regions
            reg = np.array([regions[(int(x), int(y))]
                            for x, y in g.node_pos], dtype=np.int64)
            self._subgraph_meta[basis] = (
                g, g.node_round, g.node_pos[:, 0], reg)
        return self._subgraph_meta[basis]

    def slot(self, block_id, table_size):
        return hash_slot(block_id, table_size)

    # -- seam construction -------------------------------------------------

    def _layer_positions(self, region):
        ks = [k for k, pos in enumerate(self.model.round_positions)
              if self.model.geometry.regions[pos] == region]
        return ks

    def _build_seam(self, pair):
        model = self.model
        P = model.n_per_round
        (a, b_) = pair
        if self.blocks[a].region == self.blocks[b_].region:
            # time seam: the later block's first core layer
            cut = self.blocks[b_].t_core[0]
            region = self.blocks[a].region
            ks = self._layer_positions(region)
            det_ids = np.array([cut * P + k for k in ks], dtype=np.int64)
            det_index = {int(d): i for i, d in enumerate(det_ids)}
            graphs = {}
            for basis in ("Z", "X"):
                graphs[basis] = self._time_seam_graph(region, basis, cut)
            return _Seam(pair, "time", cut, det_ids, det_index, graphs)
        # space seam: the two leftmost columns of the later region
        cut = self.bands[self.blocks[b_].region][0]
        g0, meta_round, meta_gx, _ = self._meta("Z")
        strip_ks = [k for k, pos in enumerate(model.round_positions)
                    if pos[0] in (cut, cut + 1)]
        det_ids = np.array(
            [t * P + k for t in range(model.gamma) for k in strip_ks],
            dtype=np.int64)
        det_index = {int(d): i for i, d in enumerate(det_ids)}
        graphs = {}
        for basis in ("Z", "X"):
            g, t_arr, gx_arr, _ = self._meta(basis)
            mask = (gx_arr == cut) | (gx_arr == cut + 1)
            sub, node_map = g.induce(mask, virtualize_cut=False)
            lookup = {int(g.node_det_ids[n]): i
                      for i, n in enumerate(node_map)}
            graphs[basis] = (sub, lookup)
        return _Seam(pair, "space", cut, det_ids, det_index, graphs)

    def _time_seam_graph(self, region, basis, cut):
        """In-plane graph of one round layer; structure is layer-invariant
        for memory-mode models, so one template serves all cuts."""
        template_ok = self.model.mode == "memory"
        key = (region, basis) if template_ok else (region, basis, cut)
        if key not in self._seam_graph_cache:
            g, t_arr, gx_arr, reg_arr = self._meta(basis)
            t0 = cut
            mask = (t_arr == t0) & (reg_arr == region)
            sub, node_map = g.induce(mask, virtualize_cut=False)
            P = self.model.n_per_round
            # lookup by within-round position so any layer can reuse it
            lookup_k = {int(g.node_det_ids[n]) % P: i
                        for i, n in enumerate(node_map)}
            self._seam_graph_cache[key] = (sub, lookup_k)
        sub, lookup_k = self._seam_graph_cache[key]
        P = self.model.n_per_round
        lookup = _LayerLookup(lookup_k, cut, P)
        return (sub, lookup)

    # -- window graphs -----------------------------------------------------

    def _window_key(self, block):
        t_lo, t_hi = block.t_window
        if block.kind == "spatial" or self.model.mode != "memory":
            return ("exact", block.id), 0
        if t_lo >= 1 and t_hi <= self.model.gamma - 1:
            span = t_hi - t_lo
            base_lo = self.blocks[(block.region, 1)].t_window[0]
            if span == self.d + 2 * self.b:
                return ("interior", block.region, span), t_lo - base_lo
        return ("exact", block.id), 0

    def window_graph(self, block, basis):
        """Returns (graph, det_lookup, shift_ids): global detector id g maps
        to node det_lookup[g - shift_ids]."""
        key, shift_rounds = self._window_key(block)
        cache_key = key + (basis,)
        if cache_key not in self._window_cache:
            g, t_arr, gx_arr, reg_arr = self._meta(basis)
            if key[0] == "interior":
                base = self.blocks[(block.region, 1)]
                t_lo, t_hi = base.t_window
                ref = base
            else:
                t_lo, t_hi = block.t_window
                ref = block
            mask = (t_arr >= t_lo) & (t_arr < t_hi)
            if ref.kind == "spatial":
                mask &= (gx_arr >= ref.gx_window[0]) & \
                    (gx_arr <= ref.gx_window[1])
            else:
                mask &= reg_arr == ref.region
            sub, node_map = g.induce(mask)
            lookup = {int(g.node_det_ids[n]): i
                      for i, n in enumerate(node_map)}
            self._window_cache[cache_key] = (sub, lookup)
        sub, lookup = self._window_cache[cache_key]
        return sub, lookup, shift_rounds * self.model.n_per_round


class _LayerLookup:
    """det id -> seam-graph-local node, for one time layer."""

    def __init__(self, lookup_k, cut, per_round):
        self._lookup_k = lookup_k
        self._cut = cut
        self._per_round = per_round

    def get(self, det_id, default=None):
        t, k = divmod(int(det_id), self._per_round)
        if t != self._cut:
            return default
        return self._lookup_k.get(k, default)

    def __getitem__(self, det_id):
        out = self.get(det_id)
        if out is None:
            raise KeyError(det_id)
        return out


def partition(model: DecodingModel, d: int, b: int,
              layout=None) -> BlockSet:
    """Tile the model into core+buffer blocks (the layout, if any, is
    already embedded in the model's regions)."""
    return BlockSet(model, d, b)


def _side_of(seam: _Seam, t, gx):
    coord = t if seam.axis == "time" else gx
    return coord >= seam.cut


def decode_block(blockset: BlockSet, block: Block, defects_for,
                 decoder: Callable = uf_decode,
                 bases=("Z", "X")) -> BlockResult:
    """Decode one block's window and split the matching into committed
    core edges, per-side seam projections, and discarded buffer edges.

    ``defects_for(region, t)`` must yield within-round position indices of
    fired detectors.
    """
    model = blockset.model
    P = model.n_per_round
    geometry = model.geometry
    t_lo, t_hi = block.t_window
    regions_involved = {block.region}
    if block.kind == "spatial":
        for r, band in blockset.bands.items():
            if band[1] >= block.gx_window[0] and \
                    band[0] <= block.gx_window[1]:
                regions_involved.add(r)
    seams = {p: np.zeros(blockset.seams[p].size, dtype=np.uint8)
             for p in blockset.pairs
             if block.id in p}

    logical = 0
    n_defects = 0
    n_matched = 0
    work = 0
    for basis in bases:
        graph, lookup, shift = blockset.window_graph(block, basis)
        defects = []
        for t in range(t_lo, t_hi):
            for region in sorted(regions_involved):
                for k in defects_for(region, t):
                    node = lookup.get(t * P + int(k) - shift)
                    if node is not None:
                        defects.append(node)
        n_defects += len(defects)
        corr = decoder(graph, defects)
        n_matched += len(corr.edges)
        work += corr.weight
        for e in corr.edges:
            dets = [int(graph.edges_u[e])]
            if graph.edges_v[e] != BOUNDARY:
                dets.append(int(graph.edges_v[e]))
            gdets = [int(graph.node_det_ids[n]) + shift for n in dets]
            coords = [(g // P, model.round_positions[g % P]) for g in gdets]
            min_t = min(c[0] for c in coords)
            min_gx = min(c[1][0] for c in coords)
            if block.kind == "spatial":
                committed = block.gx_core[0] <= min_gx <= block.gx_core[1]
            else:
                committed = block.t_core[0] <= min_t < block.t_core[1]
            if committed:
                logical ^= int(graph.masks[e])
            for pair, bits in seams.items():
                seam = blockset.seams[pair]
                sides = {_side_of(seam, c[0], c[1][0]) for c in coords}
                if len(sides) < 2:
                    continue
                for g, c in zip(gdets, coords):
                    if _side_of(seam, c[0], c[1][0]):
                        bits[seam.det_index[g]] ^= 1
    return BlockResult(block=block.id, logical_mask=logical, seams=seams,
                       n_defects=n_defects, n_matched_edges=n_matched,
                       work_weight=work)


def merge(seam_a: np.ndarray, seam_b: np.ndarray, seam: _Seam,
          decoder: Callable = uf_decode) -> int:
    """XOR two facing seams and decode the difference on the 2-D seam
    graph; returns the logical mask to fold into the frame."""
    if len(seam_a) != len(seam_b) or len(seam_a) != seam.size:
        raise ValueError("mismatched seam extents")
    diff = np.bitwise_xor(seam_a, seam_b)
    fired = np.flatnonzero(diff)
    if len(fired) == 0:
        return 0
    logical = 0
    for basis in ("Z", "X"):
        graph, lookup = seam.graphs[basis]
        defects = []
        for i in fired:
            node = lookup.get(int(seam.det_ids[i]))
            if node is not None:
                defects.append(node)
        if defects:
            corr = decoder(graph, defects)
            logical ^= corr.logical_flip
    return logical


def decode_all(model: DecodingModel, blockset: BlockSet, shot,
               decoder: Callable = uf_decode,
               bases=("Z", "X")) -> LogicalFrame:
    """Serial reference pipeline: decode every block, merge every seam."""
    P = model.n_per_round
    bits = shot.detector_bits.reshape(model.gamma, P)
    region_ks = {}
    for k, pos in enumerate(model.round_positions):
        region_ks.setdefault(model.geometry.regions[pos], []).append(k)

    def defects_for(region, t):
        ks = region_ks.get(region, ())
        return [k for k in ks if bits[t, k]]

    frame = LogicalFrame()
    results = {}
    for bid in sorted(blockset.blocks):
        res = decode_block(blockset, blockset.blocks[bid], defects_for,
                           decoder, bases)
        results[bid] = res
        frame.fold(("block", bid), res.logical_mask)
    for pair in blockset.pairs:
        a, b_ = pair
        mask = merge(results[a].seams[pair], results[b_].seams[pair],
                     blockset.seams[pair], decoder)
        frame.fold(("merge", pair), mask)
    return frame
