"""Rotated surface-code geometry and detector-error-model construction.

Detectors live on a (alpha+1) x (beta+1) grid of stabilizer positions per
measurement round. Z and X stabilizers occupy the two parities of the grid
((gx+gy) even vs odd); data qubits sit between grid points, data qubit
(a, b) having its four candidate stabilizer corners at grid positions
(a, b), (a+1, b), (a, b+1), (a+1, b+1). Boundary rule: top/bottom grid rows
host only X stabilizers, left/right columns only Z, so X-error chains
terminate on the top/bottom virtual boundary and Z-error chains on
left/right.

Error mechanisms come in four kinds:

* H  -- single data-qubit Pauli (X/Y/Z), flipping the anticommuting
        stabilizers of the same round; anchored at the data-qubit cell.
* V  -- measurement flip, linking a stabilizer's detectors in adjacent
        rounds; anchored at the temporally earlier detector.
* D  -- space-time diagonal, equivalent to a measurement flip plus a data
        Pauli one round later; anchored at the earlier endpoint.
* Hook -- a propagated two-qubit data error whose footprint is an
        axis-aligned adjacent data pair, linking same-basis detectors
        (e1, t) and (e1 + delta, t+1) with delta = (2, 0) for Z hooks and
        (0, 2) for X hooks; anchored at (e1, t).

Memory-mode models close both time boundaries: the initial state is a
known eigenstate and the final layer plays the role of the data-readout
comparison, so measurement-type mechanisms stop one round early and
propagated final-round errors fold into the data channel. Stability-mode
models open both time ends instead and score a time-slice crossing
observable.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np

BOUNDARY = -1  # virtual endpoint marker in per-basis subgraphs

WEIGHT_SCALE = 256  # fixed-point factor applied to -log(p/(1-p)) weights

# Hook detector displacement per basis, in grid units. The two-qubit hook
# footprint lies parallel to the same-basis logical support, so hook chains
# make no progress across the code and the effective distance is preserved.
HOOK_DELTA = {"Z": (2, 0), "X": (0, 2)}

_CHANNEL_CODES = {
    "X": 1, "Y": 2, "Z": 3, "M": 4, "H": 5, "M0": 6,
    "D++": 7, "D+-": 8, "D-+": 9, "D--": 10,
}
_CHANNEL_NAMES = {v: k for k, v in _CHANNEL_CODES.items()}

_KIND_CODES = {"H": 1, "V": 2, "D": 3, "Hook": 4}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

_PAULI_CODES = {None: 0, "X": 1, "Y": 2, "Z": 3}
_PAULI_NAMES = {v: k for k, v in _PAULI_CODES.items()}

_DET_SENTINEL = 0xFFFFFFFF

LDEM_MAGIC = b"LDEM"
LDEM_VERSION = 1


class ModelError(ValueError):
    """Raised for invalid geometry, layout, or noise configuration."""


@dataclass(frozen=True)
class NoiseParams:
    """Per-mechanism error probabilities.

    ``pauli`` is the total single-qubit Pauli rate per data qubit per round
    (split evenly over X/Y/Z), ``measurement`` the flip rate per stabilizer
    readout, ``diagonal`` and ``hook`` the per-edge rates of the two
    space-time mechanisms.
    """

    pauli: float
    measurement: float
    diagonal: float
    hook: float

    def __post_init__(self):
        for name, p in self.as_dict().items():
            if not (0.0 <= p < 0.5):
                raise ModelError(
                    f"noise probability {name}={p} outside [0, 0.5)")

    @classmethod
    def uniform(cls, p: float) -> "NoiseParams":
        """Default headline-rate mapping: (p, p, p/2, p/2)."""
        return cls(pauli=p, measurement=p, diagonal=p / 2, hook=p / 2)

    def as_dict(self) -> dict:
        return {
            "pauli": self.pauli,
            "measurement": self.measurement,
            "diagonal": self.diagonal,
            "hook": self.hook,
        }


class DetectorId(NamedTuple):
    patch: int
    x: int
    y: int
    t: int
    basis: str


class Anchor(NamedTuple):
    x: int
    y: int
    t: int
    channel: str


@dataclass(frozen=True)
class DemEdge:
    id: int
    kind: str                    # one of "H", "V", "D", "Hook"
    pauli: Optional[str]         # Pauli label for H edges
    probability: float
    detectors: tuple             # 1-4 detector indices
    logical_mask: int
    anchor: Anchor


@dataclass(frozen=True)
class Observable:
    kind: str        # "data_support" | "outcome_product" | "slice_cross"
    basis: str
    data_support: frozenset = frozenset()
    stab_support: frozenset = frozenset()
    ref_round: int = -1
    t_cut: int = -1


@dataclass(frozen=True)
class CodePatch:
    distance: int
    data_qubits: frozenset
    z_stabilizers: frozenset
    x_stabilizers: frozenset
    logical_z_boundary: frozenset
    logical_x_boundary: frozenset


@dataclass(frozen=True)
class PatchPlacement:
    distance: int
    column: int      # data-column offset on the global lattice


@dataclass(frozen=True)
class SurgeryLayout:
    patches: tuple
    merge_regions: tuple         # (left_patch_idx, right_patch_idx) pairs
    measured_operator: str

    @classmethod
    def row(cls, num_patches: int, distance: int,
            merged: bool = True, operator: Optional[str] = None
            ) -> "SurgeryLayout":
        """A horizontal row of equal patches, optionally joined by
        single-column merge regions."""
        placements = tuple(
            PatchPlacement(distance, i * (distance + 1))
            for i in range(num_patches))
        merges = tuple(
            (i, i + 1) for i in range(num_patches - 1)) if merged else ()
        op = operator if operator is not None else "Z" * num_patches
        return cls(patches=placements, merge_regions=merges,
                   measured_operator=op)


class Geometry:
    """A set of data qubits and stabilizers on the global grid."""

    def __init__(self, data, stabs, regions, observables, alpha, beta):
        self.data = frozenset(data)                  # data coords (a, b)
        self.stabs = dict(stabs)                     # grid pos -> basis
        self.regions = dict(regions)                 # grid pos -> region idx
        self.observables = tuple(observables)
        self.alpha = alpha                           # grid extent in x
        self.beta = beta                             # grid extent in y
        self.num_regions = 1 + max(regions.values()) if regions else 1
        self._z_neighbors = {}
        self._x_neighbors = {}
        for q in self.data:
            zn, xn = self._corner_split(q)
            self._z_neighbors[q] = tuple(s for s in zn if s in self.stabs)
            self._x_neighbors[q] = tuple(s for s in xn if s in self.stabs)

    def _corner_split(self, q):
        a, b = q
        if (a + b) % 2 == 0:
            return ((a, b), (a + 1, b + 1)), ((a + 1, b), (a, b + 1))
        return ((a + 1, b), (a, b + 1)), ((a, b), (a + 1, b + 1))

    def neighbors(self, q, basis):
        return self._z_neighbors[q] if basis == "Z" else self._x_neighbors[q]

    def stab_positions(self, basis):
        return sorted(p for p, b in self.stabs.items() if b == basis)

    def virtual_positions(self, basis):
        """Grid positions of this basis' parity that host no stabilizer."""
        want = 0 if basis == "Z" else 1
        out = []
        for gy in range(self.beta + 1):
            for gx in range(self.alpha + 1):
                if (gx + gy) % 2 == want and (gx, gy) not in self.stabs:
                    out.append((gx, gy))
        return out

    def interior_plaquettes(self, basis):
        """Weight-4 stabilizers: all four data corners present."""
        out = []
        for (gx, gy), b in sorted(self.stabs.items()):
            if b != basis:
                continue
            corners = [(gx - 1, gy - 1), (gx, gy - 1),
                       (gx - 1, gy), (gx, gy)]
            if all(c in self.data for c in corners):
                out.append((gx, gy))
        return out


def _rect_cells(width, height, col0, region, data, stabs, regions):
    """Fill one rectangular patch of width x height data qubits whose
    leftmost data column is col0 (grid columns [col0, col0+width])."""
    g0, g1 = col0, col0 + width
    for b in range(height):
        for a in range(col0, col0 + width):
            data.add((a, b))
    for gy in range(height + 1):
        for gx in range(g0, g1 + 1):
            interior_x = g0 < gx < g1
            interior_y = 0 < gy < height
            basis = "Z" if (gx + gy) % 2 == 0 else "X"
            if interior_x and interior_y:
                stabs[(gx, gy)] = basis
            elif interior_x and basis == "X":      # top/bottom rows
                stabs[(gx, gy)] = basis
            elif interior_y and basis == "Z":      # left/right columns
                stabs[(gx, gy)] = basis
            else:
                continue
            regions[(gx, gy)] = region


def build_surface_code(d: int) -> CodePatch:
    """Construct a distance-d rotated surface-code patch.

    The logical Z support is the top data row, the logical X support the
    left data column; the corresponding error chains terminate on the
    opposite pair of boundaries.
    """
    if d < 3 or d % 2 == 0:
        raise ModelError(f"distance must be odd and >= 3, got {d}")
    data, stabs, regions = set(), {}, {}
    _rect_cells(d, d, 0, 0, data, stabs, regions)
    return CodePatch(
        distance=d,
        data_qubits=frozenset(data),
        z_stabilizers=frozenset(p for p, b in stabs.items() if b == "Z"),
        x_stabilizers=frozenset(p for p, b in stabs.items() if b == "X"),
        logical_z_boundary=frozenset((a, 0) for a in range(d)),
        logical_x_boundary=frozenset((0, b) for b in range(d)),
    )


def _patch_geometry(patch: CodePatch) -> Geometry:
    d = patch.distance
    data, stabs, regions = set(), {}, {}
    _rect_cells(d, d, 0, 0, data, stabs, regions)
    observables = (
        Observable("data_support", "Z",
                   data_support=patch.logical_z_boundary),
        Observable("data_support", "X",
                   data_support=patch.logical_x_boundary),
    )
    return Geometry(data, stabs, regions, observables, alpha=d, beta=d)


def _layout_geometry(layout: SurgeryLayout) -> Geometry:
    patches = layout.patches
    if not patches:
        raise ModelError("layout has no patches")
    d = patches[0].distance
    if any(p.distance != d for p in patches):
        raise ModelError("mixed distances in one layout are unsupported")
    cols = [p.column for p in patches]
    if cols != sorted(cols):
        raise ModelError("patch placements must be ordered left to right")
    for i in range(len(cols) - 1):
        if cols[i + 1] < cols[i] + d + 1:
            raise ModelError(
                f"patches {i} and {i + 1} overlap on the global lattice")
    merges = tuple(tuple(m) for m in layout.merge_regions)
    for (li, ri) in merges:
        if ri != li + 1:
            raise ModelError("merge regions must join adjacent patches")
        if cols[ri] != cols[li] + d + 1:
            raise ModelError(
                "merge region requires edge-adjacent patches "
                f"(patches {li},{ri})")
    if merges and len(merges) != len(patches) - 1:
        raise ModelError("partial merges are unsupported; merge all or none")
    if merges and any(c not in "Z" for c in layout.measured_operator):
        raise ModelError("only Z-basis joint measurements are modeled")
    if len(layout.measured_operator) != len(patches):
        raise ModelError("measured_operator length must match patch count")

    data, stabs, regions = set(), {}, {}
    if merges:
        # One contiguous rectangle: patch columns plus ancilla columns.
        width = cols[-1] + d - cols[0]
        _rect_cells(width, d, cols[0], 0, data, stabs, regions)
        span = d + 1
        for pos in list(regions):
            regions[pos] = min((pos[0] - cols[0]) // span, len(patches) - 1)
        observables = []
        for (li, ri) in merges:
            ancilla_col = cols[li] + d       # data column of the ancilla
            support = frozenset(
                p for p, b in stabs.items()
                if b == "Z" and p[0] in (ancilla_col, ancilla_col + 1))
            observables.append(Observable(
                "outcome_product", "Z", stab_support=support))
        alpha = cols[0] + width
    else:
        observables = []
        for i, p in enumerate(patches):
            _rect_cells(d, d, p.column, i, data, stabs, regions)
            observables.append(Observable(
                "data_support", "Z",
                data_support=frozenset((p.column + a, 0) for a in range(d))))
        alpha = cols[-1] + d
    return Geometry(data, stabs, regions, observables, alpha=alpha, beta=d)


class MatchGraph:
    """A weighted matching graph: nodes are detectors of one basis, edges
    may end on the virtual boundary (v == BOUNDARY)."""

    def __init__(self, basis, node_det_ids, node_pos, node_round,
                 edges_u, edges_v, probs, masks, parents):
        self.basis = basis
        self.node_det_ids = np.asarray(node_det_ids, dtype=np.int64)
        self.node_pos = np.asarray(node_pos, dtype=np.int64)     # (n, 2)
        self.node_round = np.asarray(node_round, dtype=np.int64)
        self.edges_u = np.asarray(edges_u, dtype=np.int64)
        self.edges_v = np.asarray(edges_v, dtype=np.int64)
        self.probs = np.asarray(probs, dtype=np.float64)
        self.masks = np.asarray(masks, dtype=np.uint64)
        self.parents = np.asarray(parents, dtype=np.int64)
        with np.errstate(divide="ignore"):
            w = -np.log(self.probs / (1.0 - self.probs))
        self.weights = np.maximum(
            1, np.rint(WEIGHT_SCALE * w)).astype(np.int64)
        self._adj = None

    @property
    def n_nodes(self):
        return len(self.node_det_ids)

    @property
    def n_edges(self):
        return len(self.edges_u)

    def adjacency(self):
        """CSR arrays (offsets, edge_idx, other_node) over real nodes."""
        if self._adj is None:
            n = self.n_nodes
            deg = np.zeros(n + 1, dtype=np.int64)
            for u, v in zip(self.edges_u, self.edges_v):
                deg[u + 1] += 1
                if v != BOUNDARY:
                    deg[v + 1] += 1
            offs = np.cumsum(deg)
            idx = np.zeros(offs[-1], dtype=np.int64)
            oth = np.zeros(offs[-1], dtype=np.int64)
            fill = offs[:-1].copy()
            for e, (u, v) in enumerate(zip(self.edges_u, self.edges_v)):
                idx[fill[u]] = e
                oth[fill[u]] = v
                fill[u] += 1
                if v != BOUNDARY:
                    idx[fill[v]] = e
                    oth[fill[v]] = u
                    fill[v] += 1
            self._adj = (offs, idx, oth)
        return self._adj

    def induce(self, keep_mask, virtualize_cut=True):
        """Subgraph on the nodes where keep_mask is True.

        Edges losing one endpoint become boundary edges when
        virtualize_cut, else are dropped. Returns (graph, node_map) where
        node_map holds parent-local node ids.
        """
        keep_mask = np.asarray(keep_mask, dtype=bool)
        node_map = np.flatnonzero(keep_mask)
        local = -np.ones(self.n_nodes, dtype=np.int64)
        local[node_map] = np.arange(len(node_map))
        eu, ev, pr, mk, pa = [], [], [], [], []
        for e in range(self.n_edges):
            u, v = self.edges_u[e], self.edges_v[e]
            lu = local[u]
            if v == BOUNDARY:
                if lu < 0:
                    continue
                lv = BOUNDARY
            else:
                lv = local[v]
                if lu < 0 and lv < 0:
                    continue
                if lu < 0 or lv < 0:
                    # edge severed by the window cut
                    if not virtualize_cut:
                        continue
                    lu, lv = (lu, BOUNDARY) if lu >= 0 else (lv, BOUNDARY)
            eu.append(lu)
            ev.append(lv)
            pr.append(self.probs[e])
            mk.append(self.masks[e])
            pa.append(e)
        return MatchGraph(
            self.basis,
            self.node_det_ids[node_map],
            self.node_pos[node_map],
            self.node_round[node_map],
            eu, ev, pr, mk, pa), node_map


class DecodingModel:
    """Detectors plus error mechanisms for a geometry over gamma rounds."""

    def __init__(self, geometry, gamma, noise, mode, edges, observables):
        self.geometry = geometry
        self.gamma = gamma
        self.noise = noise
        self.mode = mode
        self.edges = edges
        self.observables = observables
        self.alpha = geometry.alpha
        self.beta = geometry.beta

        positions = sorted(geometry.stabs, key=lambda p: (p[1], p[0]))
        self.round_positions = positions
        self._pos_index = {p: k for k, p in enumerate(positions)}
        self.detectors = []
        for t in range(gamma):
            for p in positions:
                self.detectors.append(DetectorId(
                    geometry.regions[p], p[0], p[1], t, geometry.stabs[p]))
        self.n_detectors = len(self.detectors)
        self.n_per_round = len(positions)

        self.edge_probs = np.array(
            [e.probability for e in edges], dtype=np.float64)
        self.edge_masks = np.array(
            [e.logical_mask for e in edges], dtype=np.uint64)
        offs = [0]
        flat = []
        for e in edges:
            flat.extend(e.detectors)
            offs.append(len(flat))
        self.edge_det_offsets = np.array(offs, dtype=np.int64)
        self.edge_det_flat = np.array(flat, dtype=np.int64)

        self.anchor_map = {}
        for e in edges:
            key = (e.anchor.channel, e.anchor.x, e.anchor.y, e.anchor.t)
            if key in self.anchor_map:
                raise ModelError(f"duplicate anchor {key}")
            self.anchor_map[key] = e.id

        self.z_subgraph = None
        self.x_subgraph = None
        self._edge_split = None
        self._basis_local = {}

    # -- indexing helpers -------------------------------------------------

    def detector_index(self, pos, t):
        return t * self.n_per_round + self._pos_index[pos]

    def detector_round(self, det_id):
        return det_id // self.n_per_round

    def round_slice(self, t):
        lo = t * self.n_per_round
        return lo, lo + self.n_per_round

    def obs_basis_mask(self, basis):
        m = 0
        for i, ob in enumerate(self.observables):
            if ob.basis == basis:
                m |= 1 << i
        return m

    def subgraph(self, basis):
        if self.z_subgraph is None:
            decompose_hyperedges(self)
        return self.z_subgraph if basis == "Z" else self.x_subgraph

    def basis_local_index(self, basis):
        """Array mapping global detector id -> subgraph-local node id."""
        if basis not in self._basis_local:
            g = self.subgraph(basis)
            arr = -np.ones(self.n_detectors, dtype=np.int64)
            arr[g.node_det_ids] = np.arange(g.n_nodes)
            self._basis_local[basis] = arr
        return self._basis_local[basis]

    def edge_detectors(self, edge_id):
        o = self.edge_det_offsets
        return self.edge_det_flat[o[edge_id]:o[edge_id + 1]]

    def syndrome_of(self, edge_ids):
        """Detector-bit vector produced by flipping a set of edges."""
        bits = np.zeros(self.n_detectors, dtype=bool)
        for e in edge_ids:
            bits[self.edge_detectors(e)] ^= True
        return bits

    def logical_of(self, edge_ids):
        m = np.uint64(0)
        for e in edge_ids:
            m ^= self.edge_masks[e]
        return int(m)


def _obs_mask_h(observables, q, pauli, geometry):
    """Observable mask of a single data-qubit Pauli at q (any round).

    data_support observables flip when the anticommuting component lies on
    their support; outcome_product observables flip when the error touches
    an odd number of the product's stabilizers.
    """
    mask = 0
    for i, ob in enumerate(observables):
        if ob.kind == "data_support":
            comp = "X" if ob.basis == "Z" else "Z"
            if pauli in (comp, "Y") and q in ob.data_support:
                mask |= 1 << i
        elif ob.kind == "outcome_product":
            if pauli in ("X", "Y"):
                hits = sum(1 for s in geometry.neighbors(q, "Z")
                           if s in ob.stab_support)
                if hits % 2:
                    mask |= 1 << i
    return mask


def _build_edges(geometry, gamma, noise, mode):
    """Enumerate all error mechanisms; returns a list of DemEdge."""
    stabs = geometry.stabs
    observables = list(geometry.observables)
    if mode == "stability":
        t_cut = max(1, gamma // 2)
        observables = [Observable("slice_cross", "Z", t_cut=t_cut),
                       Observable("slice_cross", "X", t_cut=t_cut)]
    elif mode == "memory":
        pass
    else:
        raise ModelError(f"unknown mode {mode!r}")
    observables = tuple(
        ob if ob.kind != "outcome_product"
        else Observable(ob.kind, ob.basis, stab_support=ob.stab_support,
                        ref_round=gamma - 1)
        for ob in observables)
    if len(observables) > 64:
        raise ModelError("at most 64 logical observables supported")

    def slice_mask(basis, t_lo, t_hi):
        # crossing bit for an edge spanning rounds [t_lo, t_hi]
        m = 0
        for i, ob in enumerate(observables):
            if (ob.kind == "slice_cross" and ob.basis == basis
                    and t_lo < ob.t_cut <= t_hi):
                m |= 1 << i
        return m

    def product_mask_v(s, t):
        # a measurement flip touches exactly the outcome at (s, t)
        m = 0
        for i, ob in enumerate(observables):
            if (ob.kind == "outcome_product" and s in ob.stab_support
                    and t == ob.ref_round):
                m |= 1 << i
        return m

    edges = []
    det = {}

    def det_idx(pos, t):
        return det.setdefault((pos, t), None)

    # detector ids mirror DecodingModel ordering
    positions = sorted(stabs, key=lambda p: (p[1], p[0]))
    pos_index = {p: k for k, p in enumerate(positions)}
    P = len(positions)

    def D(pos, t):
        return t * P + pos_index[pos]

    def add(kind, pauli, prob, dets, mask, anchor):
        edges.append(DemEdge(
            id=len(edges), kind=kind, pauli=pauli, probability=prob,
            detectors=tuple(dets), logical_mask=mask, anchor=anchor))

    data_sorted = sorted(geometry.data, key=lambda q: (q[1], q[0]))
    p3 = noise.pauli / 3.0

    for t in range(gamma):
        for q in data_sorted:
            zs = geometry.neighbors(q, "Z")
            xs = geometry.neighbors(q, "X")
            for pauli in ("X", "Y", "Z"):
                dets = []
                if pauli in ("X", "Y"):
                    dets += [D(s, t) for s in zs]
                if pauli in ("Z", "Y"):
                    dets += [D(s, t) for s in xs]
                mask = _obs_mask_h(observables, q, pauli, geometry)
                add("H", pauli, p3, sorted(dets), mask,
                    Anchor(q[0], q[1], t, pauli))

    # memory closes the final time boundary (readout comparison), so the
    # last measurement-flip mechanism links gamma-2 and gamma-1
    v_hi = gamma - 1 if mode == "memory" else gamma
    for t in range(v_hi):
        for s in positions:
            dets = [D(s, t)]
            if t + 1 < gamma:
                dets.append(D(s, t + 1))
            basis = stabs[s]
            mask = slice_mask(basis, t, t + 1) | product_mask_v(s, t)
            add("V", None, noise.measurement, dets, mask,
                Anchor(s[0], s[1], t, "M"))
    if mode == "stability":
        # open time start: an initialization-boundary flip per stabilizer
        for s in positions:
            add("V", None, noise.measurement, [D(s, 0)],
                slice_mask(stabs[s], -1, 0), Anchor(s[0], s[1], 0, "M0"))

    for t in range(gamma - 1):
        for basis in ("Z", "X"):
            for q in data_sorted:
                nbs = geometry.neighbors(q, basis)
                if len(nbs) != 2:
                    continue
                comp = "X" if basis == "Z" else "Z"
                # the diagonal's observable effect equals its Pauli
                # component's (the measurement part cancels in any product
                # that spans both rounds)
                base_mask = _obs_mask_h(observables, q, comp, geometry)
                for s_early, s_late in (nbs, nbs[::-1]):
                    mask = slice_mask(basis, t, t + 1) | base_mask
                    dx = "+" if s_late[0] > s_early[0] else "-"
                    dy = "+" if s_late[1] > s_early[1] else "-"
                    add("D", None, noise.diagonal,
                        [D(s_early, t), D(s_late, t + 1)], mask,
                        Anchor(s_early[0], s_early[1], t, f"D{dx}{dy}"))

    # hooks, enumerated by their detector endpoint pair; two adjacent data
    # footprints can generate the same pair, so dedupe on the endpoints
    hook_sites = {}
    for q in data_sorted:
        a, b = q
        for basis, partner in (("Z", (a + 1, b)), ("X", (a, b + 1))):
            if partner not in geometry.data:
                continue
            comp = "X" if basis == "Z" else "Z"
            flips = {}
            for qq in (q, partner):
                for s in geometry.neighbors(qq, basis):
                    flips[s] = flips.get(s, 0) ^ 1
            endpoints = sorted(s for s, c in flips.items() if c)
            if not endpoints:
                continue
            delta = HOOK_DELTA[basis]
            if len(endpoints) == 2:
                e1, e2 = endpoints
                if (e2[0] - e1[0], e2[1] - e1[1]) != delta:
                    raise ModelError("unexpected hook displacement")
            else:
                # one endpoint is virtual; recover the anchor side
                s = endpoints[0]
                other = (s[0] - delta[0], s[1] - delta[1])
                e1, e2 = (other, s) if other not in stabs else (
                    s, (s[0] + delta[0], s[1] + delta[1]))
            mask_q = _obs_mask_h(observables, q, comp, geometry) ^ \
                _obs_mask_h(observables, partner, comp, geometry)
            key = (basis, e1)
            if key not in hook_sites:
                hook_sites[key] = (e1, e2, mask_q, basis)
    # final-round hooks fold into the readout layer in memory mode
    hook_t_hi = gamma - 1 if mode == "memory" else gamma
    for (basis, _), (e1, e2, mask_q, _) in sorted(hook_sites.items()):
        for t in range(hook_t_hi):
            dets = []
            if e1 in stabs and stabs[e1] == basis:
                dets.append(D(e1, t))
            e2_real = (e2 in stabs and stabs[e2] == basis
                       and t + 1 < gamma)
            if e2_real:
                dets.append(D(e2, t + 1))
            if not dets:
                continue
            mask = slice_mask(basis, t, t + 1)
            for i, ob in enumerate(observables):
                if ob.kind == "data_support":
                    mask |= mask_q & (1 << i)
                elif ob.kind == "outcome_product":
                    # outcome flips start at t for e1, t+1 for e2
                    flip = (e1 in ob.stab_support) ^ \
                           (e2 in ob.stab_support and t + 1 < gamma)
                    if flip:
                        mask |= 1 << i
            add("Hook", None, noise.hook, dets, mask,
                Anchor(e1[0], e1[1], t, "H"))

    return edges, observables


def build_dem(source, rounds: int, noise: NoiseParams,
              mode: str = "memory") -> DecodingModel:
    """Build the decoding model for a patch, geometry, or layout."""
    if rounds < 1:
        raise ModelError(f"rounds must be >= 1, got {rounds}")
    if isinstance(source, CodePatch):
        geometry = _patch_geometry(source)
    elif isinstance(source, SurgeryLayout):
        geometry = _layout_geometry(source)
    elif isinstance(source, Geometry):
        geometry = source
    else:
        raise ModelError(f"cannot build a model from {type(source)!r}")
    edges, observables = _build_edges(geometry, rounds, noise, mode)
    model = DecodingModel(geometry, rounds, noise, mode, edges, observables)
    decompose_hyperedges(model)
    return model


def build_surgery_model(layout: SurgeryLayout, rounds: int,
                        noise: NoiseParams) -> DecodingModel:
    """Model for a multi-patch layout; merged layouts carry one joint
    Z-product observable per merge region."""
    return build_dem(layout, rounds, noise)


def decompose_hyperedges(model: DecodingModel) -> DecodingModel:
    """Populate per-basis subgraphs by splitting each mechanism's
    detector set by basis. Parallel edges with identical endpoints and
    masks are combined (XOR of independent flips)."""
    if model.z_subgraph is not None:
        return model
    per_basis = {}
    split = [[None, None] for _ in model.edges]
    for bi, basis in enumerate(("Z", "X")):
        positions = [p for p in model.round_positions
                     if model.geometry.stabs[p] == basis]
        pos_local = {p: k for k, p in enumerate(positions)}
        Pb = len(positions)
        node_det, node_pos, node_round = [], [], []
        for t in range(model.gamma):
            for p in positions:
                node_det.append(model.detector_index(p, t))
                node_pos.append(p)
                node_round.append(t)

        def local_of(det_id):
            d = model.detectors[det_id]
            return d.t * Pb + pos_local[(d.x, d.y)]

        basis_mask = np.uint64(model.obs_basis_mask(basis))
        combined = {}
        order = []
        for e in model.edges:
            if e.probability <= 0.0:
                continue
            dets = [d for d in e.detectors
                    if model.detectors[d].basis == basis]
            if not dets:
                continue
            if len(dets) > 2:
                raise ModelError("more than two same-basis detectors")
            u = local_of(dets[0])
            v = local_of(dets[1]) if len(dets) == 2 else BOUNDARY
            if v != BOUNDARY and v < u:
                u, v = v, u
            mask = np.uint64(e.logical_mask) & basis_mask
            key = (u, v, int(mask))
            if key not in combined:
                combined[key] = [0.0, e.id]
                order.append(key)
            p_old = combined[key][0]
            p_new = e.probability
            combined[key][0] = p_old * (1 - p_new) + p_new * (1 - p_old)
            split[e.id][bi] = key
        order.sort()
        key_index = {k: i for i, k in enumerate(order)}
        eu = [k[0] for k in order]
        ev = [k[1] for k in order]
        pr = [combined[k][0] for k in order]
        mk = [k[2] for k in order]
        pa = [combined[k][1] for k in order]
        per_basis[basis] = MatchGraph(
            basis, node_det, node_pos, node_round, eu, ev, pr, mk, pa)
        for e in model.edges:
            if split[e.id][bi] is not None:
                split[e.id][bi] = key_index[split[e.id][bi]]
    model.z_subgraph = per_basis["Z"]
    model.x_subgraph = per_basis["X"]
    model._edge_split = split
    return model


# -- serialization ---------------------------------------------------------

def _pack_anchor(model, anchor):
    w = model.alpha + 1
    h = model.beta + 1
    code = (anchor.t * h + anchor.y) * w + anchor.x
    if code > 0xFFFFFFFF:
        raise ModelError("anchor position exceeds the u32 code space")
    return code


def save_model(model: DecodingModel, path) -> None:
    """Write the versioned little-endian binary model file."""
    buf = io.BytesIO()
    buf.write(LDEM_MAGIC)
    buf.write(struct.pack(
        "<HHHIIIB B H", LDEM_VERSION, model.alpha, model.beta, model.gamma,
        model.n_detectors, len(model.edges), len(model.observables),
        0 if model.mode == "memory" else 1, model.geometry.num_regions))
    noise = model.noise
    buf.write(struct.pack("<4d", noise.pauli, noise.measurement,
                          noise.diagonal, noise.hook))
    buf.write(struct.pack("<I", len(model.geometry.data)))
    for (a, b) in sorted(model.geometry.data):
        buf.write(struct.pack("<HH", a, b))
    for d in model.detectors:
        buf.write(struct.pack("<HHHIB", d.patch, d.x, d.y, d.t,
                              0 if d.basis == "Z" else 1))
    for ob in model.observables:
        kind = {"data_support": 0, "outcome_product": 1, "slice_cross": 2}
        support = sorted(ob.data_support or ob.stab_support)
        buf.write(struct.pack(
            "<BBiiI", kind[ob.kind], 0 if ob.basis == "Z" else 1,
            ob.ref_round, ob.t_cut, len(support)))
        for (x, y) in support:
            buf.write(struct.pack("<HH", x, y))
    for e in model.edges:
        dets = list(e.detectors) + [_DET_SENTINEL] * (4 - len(e.detectors))
        buf.write(struct.pack(
            "<BBd4IQIB", _KIND_CODES[e.kind], _PAULI_CODES[e.pauli],
            e.probability, *dets, e.logical_mask,
            _pack_anchor(model, e.anchor), _CHANNEL_CODES[e.anchor.channel]))
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_model(path) -> DecodingModel:
    with open(path, "rb") as f:
        raw = f.read()
    buf = io.BytesIO(raw)
    if buf.read(4) != LDEM_MAGIC:
        raise ModelError("bad magic; not a model file")
    (version, alpha, beta, gamma, n_det, n_edges, n_obs, mode_code,
     _n_regions) = struct.unpack("<HHHIIIB B H", buf.read(22))
    if version != LDEM_VERSION:
        raise ModelError(f"unsupported model version {version}")
    noise = NoiseParams(*struct.unpack("<4d", buf.read(32)))
    (n_data,) = struct.unpack("<I", buf.read(4))
    data = set()
    for _ in range(n_data):
        data.add(struct.unpack("<HH", buf.read(4)))
    stabs, regions = {}, {}
    detectors = []
    for _ in range(n_det):
        patch, x, y, t, bas = struct.unpack("<HHHIB", buf.read(11))
        basis = "Z" if bas == 0 else "X"
        detectors.append(DetectorId(patch, x, y, t, basis))
        stabs[(x, y)] = basis
        regions[(x, y)] = patch
    kinds = {0: "data_support", 1: "outcome_product", 2: "slice_cross"}
    observables = []
    for _ in range(n_obs):
        kd, bas, ref, tcut, n_sup = struct.unpack("<BBiiI", buf.read(14))
        support = frozenset(
            struct.unpack("<HH", buf.read(4)) for _ in range(n_sup))
        kind = kinds[kd]
        observables.append(Observable(
            kind, "Z" if bas == 0 else "X",
            data_support=support if kind == "data_support" else frozenset(),
            stab_support=support if kind != "data_support" else frozenset(),
            ref_round=ref, t_cut=tcut))
    w = alpha + 1
    h = beta + 1
    edges = []
    rec_size = struct.calcsize("<BBd4IQIB")
    for i in range(n_edges):
        # rec = (kind, pauli, prob, d0, d1, d2, d3, mask, anchor, channel)
        rec = struct.unpack("<BBd4IQIB", buf.read(rec_size))
        dets = tuple(d for d in rec[3:7] if d != _DET_SENTINEL)
        code = rec[8]
        ax = code % w
        ay = (code // w) % h
        at = code // (w * h)
        edges.append(DemEdge(
            id=i, kind=_KIND_NAMES[rec[0]], pauli=_PAULI_NAMES[rec[1]],
            probability=rec[2], detectors=dets, logical_mask=rec[7],
            anchor=Anchor(ax, ay, at, _CHANNEL_NAMES[rec[9]])))
    geometry = Geometry(data, stabs, regions, observables, alpha, beta)
    mode = "memory" if mode_code == 0 else "stability"
    model = DecodingModel(geometry, gamma, noise, mode,
                          edges, tuple(observables))
    decompose_hyperedges(model)
    return model
