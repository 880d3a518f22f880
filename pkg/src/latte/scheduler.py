"""Global dynamic scheduling of decode and merge tasks over a virtual clock.

The engine is a deterministic discrete-event simulation: rounds arrive on
the virtual clock, a decode task becomes eligible exactly when its block's
core+buffer rounds are stored, a merge task exactly when both facing seams
exist. M decode servers and N merge servers consume the queues with
work-proportional virtual durations, so latency statistics are exactly
reproducible from (model, stream, config) while logical outcomes are
independent of the worker counts by XOR commutativity.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .blocks import BlockSet, LogicalFrame, decode_block, merge
from .code_model import DecodingModel
from .decoders import uf_decode
from .sampler import BacklogError, RoundRecord


@dataclass(frozen=True)
class SchedulerConfig:
    decode_workers: int = 1
    merge_workers: int = 2
    block_rounds: int = 0          # core depth d; 0 = model distance-like
    buffer_depth: int = 1
    high_water: int = 1024         # buffered undecoded rounds before abort
    round_period_ns: int = 1000
    input_delay_ns: int = 0        # e.g. local-decode pipeline latency
    decode_base_ns: int = 3000     # fixed per-task overhead dominates at
    decode_per_defect_ns: int = 100   # desk scale, as in matching engines
    merge_base_ns: int = 1000
    merge_per_bit_ns: int = 50
    feedback_every: int = 0        # rounds between TICKs; 0 = block depth
    decoder: Callable = uf_decode
    bases: tuple = ("Z", "X")

    def __post_init__(self):
        if self.decode_workers < 1 or self.merge_workers < 1:
            raise ValueError("worker pools need at least one worker")


@dataclass(frozen=True)
class FeedbackEvent:
    tick_ns: int
    frontier_round: int
    bits: int
    delivered_ns: int
    latency_ns: int


@dataclass
class RunResult:
    feedback: list
    trace: list
    frame: LogicalFrame
    stats: dict


def run(model: DecodingModel, records: Iterable[RoundRecord],
        cfg: SchedulerConfig,
        blockset: Optional[BlockSet] = None) -> RunResult:
    """Route a round stream through block decoding and seam merging."""
    d = cfg.block_rounds or min(model.gamma, model.beta)
    blockset = blockset or BlockSet(model, d, cfg.buffer_depth)
    frame = LogicalFrame()
    trace = []
    feedback = []

    # which blocks consume each (region, t) round, and the reverse map
    consumers = {}
    block_rounds = {bid: [] for bid in blockset.blocks}
    for bid, blk in blockset.blocks.items():
        regions = {blk.region}
        if blk.kind == "spatial":
            for r, band in blockset.bands.items():
                if band[1] >= blk.gx_window[0] and \
                        band[0] <= blk.gx_window[1]:
                    regions.add(r)
        for region in sorted(regions):
            for t in range(*blk.t_window):
                consumers.setdefault((region, t), []).append(bid)
                block_rounds[bid].append((region, t))
    # rounds still needed before a block can decode
    missing = {bid: len(keys) for bid, keys in block_rounds.items()}

    store = {}                     # (region, t) -> indices
    refcount = {k: len(v) for k, v in consumers.items()}
    core_block = {}                # (region, t) -> core block id
    for bid, blk in blockset.blocks.items():
        for t in range(*blk.t_core):
            core_block[(blk.region, t)] = bid

    pair_results = {}              # pair -> {block id: bits}
    block_done = set()
    merge_done = set()

    ticks = _tick_schedule(model, blockset, cfg, d)
    task_ticks = {}
    tick_remaining = []
    for k, (tick_ns, frontier, deps) in enumerate(ticks):
        tick_remaining.append(len(deps))
        for task in deps:
            task_ticks.setdefault(task, []).append(k)
    tick_last_done = [0] * len(ticks)
    tick_time_reached = [False] * len(ticks)
    tick_delivered = [False] * len(ticks)

    events = []                    # (time, seq, kind, payload)
    seq = 0

    def push(time_ns, kind, payload):
        nonlocal seq
        heapq.heappush(events, (int(time_ns), seq, kind, payload))
        seq += 1

    n_rounds_seen = 0
    for rec in records:
        push(rec.timestamp_ns + cfg.input_delay_ns, "round", rec)
        n_rounds_seen += 1
    for k, (tick_ns, _frontier, _deps) in enumerate(ticks):
        push(tick_ns, "tick", k)

    decode_queue = []
    merge_queue = []
    free_decode = list(range(cfg.decode_workers))
    free_merge = list(range(cfg.merge_workers))
    buffered = 0
    stats = {
        "decode_tasks": 0, "merge_tasks": 0, "max_buffered": 0,
        "max_live_rounds": 0, "max_decode_queue": 0, "max_merge_queue": 0,
        "defects_total": 0, "matched_edges_total": 0, "work_weight": 0,
        "rounds": n_rounds_seen,
    }

    def round_ts(t):
        return t * cfg.round_period_ns

    def defects_for(region, t):
        return store.get((region, t), ())

    def complete_task(task, now):
        for k in task_ticks.get(task, ()):
            tick_remaining[k] -= 1
            tick_last_done[k] = max(tick_last_done[k], now)
            maybe_deliver(k, now)

    def maybe_deliver(k, now):
        if tick_delivered[k] or tick_remaining[k] or \
                not tick_time_reached[k]:
            return
        tick_ns, frontier, deps = ticks[k]
        delivered = max(tick_ns, tick_last_done[k])
        bits = frame.restrict(deps)
        last_round = max(
            blockset.blocks[bid].ready_round
            for kind, bid in deps if kind == "block")
        feedback.append(FeedbackEvent(
            tick_ns=tick_ns, frontier_round=frontier, bits=bits,
            delivered_ns=delivered,
            latency_ns=delivered - round_ts(last_round)))
        tick_delivered[k] = True

    def dispatch(now):
        while free_decode and decode_queue:
            worker = free_decode.pop(0)
            bid, n_def = decode_queue.pop(0)
            blockset.blocks[bid].state = "decoding"
            dur = cfg.decode_base_ns + cfg.decode_per_defect_ns * n_def
            push(now + dur, "decode_end", (worker, bid, now))
        while free_merge and merge_queue:
            worker = free_merge.pop(0)
            pair, n_bits = merge_queue.pop(0)
            dur = cfg.merge_base_ns + cfg.merge_per_bit_ns * n_bits
            push(now + dur, "merge_end", (worker, pair, now))

    while events:
        now, _, kind, payload = heapq.heappop(events)
        if kind == "round":
            rec = payload
            key = (rec.patch, rec.round_index)
            store[key] = rec.indices
            buffered += 1
            stats["max_buffered"] = max(stats["max_buffered"], buffered)
            stats["max_live_rounds"] = max(
                stats["max_live_rounds"], len(store))
            if buffered > cfg.high_water:
                raise BacklogError(rec.round_index, buffered)
            for bid in consumers.get(key, ()):
                missing[bid] -= 1
                if missing[bid] == 0:
                    n_def = sum(len(store.get(k, ()))
                                for k in block_rounds[bid])
                    decode_queue.append((bid, n_def))
                    stats["max_decode_queue"] = max(
                        stats["max_decode_queue"], len(decode_queue))
        elif kind == "decode_end":
            worker, bid, t_start = payload
            blk = blockset.blocks[bid]
            res = decode_block(blockset, blk, defects_for,
                               cfg.decoder, cfg.bases)
            blk.state = "finished"
            block_done.add(bid)
            stats["decode_tasks"] += 1
            stats["defects_total"] += res.n_defects
            stats["matched_edges_total"] += res.n_matched_edges
            stats["work_weight"] += res.work_weight
            frame.fold(("block", bid), res.logical_mask)
            trace.append({"type": "decode", "block": list(bid),
                          "t_start": t_start, "t_end": now,
                          "worker": worker})
            buffered -= blk.t_core[1] - blk.t_core[0]
            for key in block_rounds[bid]:
                refcount[key] -= 1
                if refcount[key] == 0:
                    store.pop(key, None)
            for pair, bits in res.seams.items():
                pair_results.setdefault(pair, {})[bid] = bits
                if len(pair_results[pair]) == 2:
                    other = pair[0] if pair[1] == bid else pair[1]
                    n_bits = int(np.sum(
                        pair_results[pair][bid]
                        ^ pair_results[pair][other]))
                    merge_queue.append((pair, n_bits))
                    stats["max_merge_queue"] = max(
                        stats["max_merge_queue"], len(merge_queue))
            complete_task(("block", bid), now)
            free_decode.append(worker)
            free_decode.sort()
        elif kind == "merge_end":
            worker, pair, t_start = payload
            sides = pair_results.pop(pair)
            mask = merge(sides[pair[0]], sides[pair[1]],
                         blockset.seams[pair], cfg.decoder)
            merge_done.add(pair)
            stats["merge_tasks"] += 1
            frame.fold(("merge", pair), mask)
            trace.append({"type": "merge",
                          "block": [list(pair[0]), list(pair[1])],
                          "t_start": t_start, "t_end": now,
                          "worker": worker})
            complete_task(("merge", pair), now)
            free_merge.append(worker)
            free_merge.sort()
        elif kind == "tick":
            k = payload
            tick_time_reached[k] = True
            maybe_deliver(k, now)
        dispatch(now)

    if len(block_done) != len(blockset.blocks):
        raise RuntimeError("scheduler finished with undecoded blocks")
    if len(merge_done) != len(blockset.pairs):
        raise RuntimeError("scheduler finished with unmerged seams")
    stats["blocks"] = len(blockset.blocks)
    stats["seam_pairs"] = len(blockset.pairs)
    latencies = [fb.latency_ns for fb in feedback]
    if latencies:
        stats["tick_latency_max_ns"] = max(latencies)
        stats["tick_latency_median_ns"] = float(np.median(latencies))
    return RunResult(feedback=feedback, trace=trace, frame=frame,
                     stats=stats)


def _tick_schedule(model, blockset, cfg, d):
    """Default feedback schedule: one TICK per `every` rounds, depending on
    every block whose core lies before the frontier and every seam between
    them."""
    every = cfg.feedback_every or d
    ticks = []
    frontier = every
    while frontier <= model.gamma:
        deps = []
        for bid, blk in blockset.blocks.items():
            if blk.t_core[1] <= frontier:
                deps.append(("block", bid))
        for pair in blockset.pairs:
            if blockset.blocks[pair[0]].t_core[1] <= frontier and \
                    blockset.blocks[pair[1]].t_core[1] <= frontier:
                deps.append(("merge", pair))
        ticks.append((frontier * cfg.round_period_ns, frontier, deps))
        frontier += every
    return ticks


# -- Pauli-frame feedback ----------------------------------------------------

_PAULIS = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_GATES = {
    "X": _PAULIS["X"],
    "Z": _PAULIS["Z"],
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0],
                      [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}


@dataclass(frozen=True)
class PauliBasisState:
    """Current measurement basis (Pauli, sign) per logical qubit."""

    bases: tuple

    @classmethod
    def identity(cls, n: int) -> "PauliBasisState":
        return cls(bases=tuple(("I", 1) for _ in range(n)))


def _conjugate(gate_mat, pauli_mat, n_qubits):
    out = gate_mat.conj().T @ pauli_mat @ gate_mat
    names = list(_PAULIS)
    for combo in np.ndindex(*(4,) * n_qubits):
        sigma = _PAULIS[names[combo[0]]]
        for c in combo[1:]:
            sigma = np.kron(sigma, _PAULIS[names[c]])
        coef = np.trace(sigma.conj().T @ out) / (2 ** n_qubits)
        if abs(abs(coef) - 1.0) < 1e-9:
            sign = int(round(coef.real))
            if abs(coef.real) < 0.5:
                raise ValueError("non-real Pauli conjugation phase")
            return tuple(names[c] for c in combo), sign
    raise ValueError("conjugation did not yield a Pauli string")


def update_measurement_basis(state: PauliBasisState, gate,
                             outcome: int) -> PauliBasisState:
    """Fold a conditional Clifford into the tracked measurement bases.

    ``gate`` is (name, *targets) with name in {X, Z, S, H, CNOT}. Outcome 0
    leaves the state unchanged; outcome 1 conjugates the targeted bases
    through the gate (the pair's overall sign lands on the first target).
    """
    name = gate[0]
    targets = gate[1:]
    if name not in _GATES:
        raise ValueError(f"unknown gate tag {name!r}")
    expected = 2 if name == "CNOT" else 1
    if len(targets) != expected:
        raise ValueError(f"{name} takes {expected} target(s)")
    if outcome not in (0, 1):
        raise ValueError("outcome must be a bit")
    if outcome == 0:
        return state
    bases = list(state.bases)
    mats = _PAULIS[bases[targets[0]][0]]
    sign_in = bases[targets[0]][1]
    if name == "CNOT":
        mats = np.kron(mats, _PAULIS[bases[targets[1]][0]])
        sign_in *= bases[targets[1]][1]
    new_paulis, sign = _conjugate(_GATES[name], mats, expected)
    bases[targets[0]] = (new_paulis[0], sign_in * sign)
    if name == "CNOT":
        bases[targets[1]] = (new_paulis[1], 1)
    return PauliBasisState(bases=tuple(bases))


def fidelity_penalty(latency_ns: float, error_per_round: float,
                     round_period_ns: float = 1000.0) -> float:
    """Logical-error-rate increase caused by waiting on decoder feedback:
    0.5 * (1 - (1 - 2 eps)^n) with n idle rounds."""
    if not (0.0 <= error_per_round <= 0.5):
        raise ValueError("error_per_round must lie in [0, 0.5]")
    if latency_ns < 0:
        raise ValueError("latency must be non-negative")
    n = math.ceil(latency_ns / round_period_ns)
    return 0.5 * (1.0 - (1.0 - 2.0 * error_per_round) ** n)
