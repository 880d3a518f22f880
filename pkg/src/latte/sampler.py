"""Shot sampling and real-time-paced streaming of syndrome rounds."""

from __future__ import annotations

import struct
import time as _time
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np

from .code_model import DecodingModel


class BacklogError(RuntimeError):
    """The consumer fell behind the round stream past the high-water mark.

    This is a measured failure mode of a run, not a programming error.
    """

    def __init__(self, round_index: int, backlog: int):
        super().__init__(
            f"backlog of {backlog} rounds at round {round_index}")
        self.round_index = round_index
        self.backlog = backlog


@dataclass(frozen=True)
class Shot:
    flipped_edges: np.ndarray     # sorted edge ids
    detector_bits: np.ndarray     # bool, one per non-virtual detector
    true_logical: int


@dataclass(frozen=True)
class StreamConfig:
    round_period_ns: int = 1000   # 1 us of virtual time per round
    hybrid_mode: bool = False
    time_scale: float = 0.0       # wall seconds per virtual ns; 0 = free-run
    seed: int = 0
    high_water: int = 1024        # buffered rounds before a backlog fault

    def __post_init__(self):
        if self.round_period_ns <= 0:
            raise ValueError("round_period_ns must be positive")
        if self.time_scale < 0:
            raise ValueError("time_scale must be >= 0")


class RoundRecord(NamedTuple):
    patch: int
    round_index: int
    indices: tuple          # sorted within-round detector indices
    timestamp_ns: int


def _shot_rng(seed: int, shot_index: int) -> np.random.Generator:
    # counter-based: independent streams per shot, thread-count invariant
    return np.random.Generator(np.random.Philox(key=[seed, shot_index]))


def sample_shot(model: DecodingModel, seed: int,
                shot_index: int = 0) -> Shot:
    """Flip each mechanism independently with its probability."""
    rng = _shot_rng(seed, shot_index)
    u = rng.random(len(model.edge_probs))
    flipped = np.flatnonzero(u < model.edge_probs)
    bits = model.syndrome_of(flipped)
    return Shot(flipped_edges=flipped, detector_bits=bits,
                true_logical=model.logical_of(flipped))


def sample_shots(model: DecodingModel, seed: int,
                 n_shots: int) -> Iterator[Shot]:
    for i in range(n_shots):
        yield sample_shot(model, seed, i)


def force_shot(model: DecodingModel, edge_ids) -> Shot:
    """Shot with exactly the given edges flipped (test/diagnostic aid)."""
    flipped = np.asarray(sorted(edge_ids), dtype=np.int64)
    return Shot(flipped_edges=flipped,
                detector_bits=model.syndrome_of(flipped),
                true_logical=model.logical_of(flipped))


# -- round extraction and wire format ---------------------------------------

def _region_round_indices(model: DecodingModel):
    """Per-region arrays of within-round position indices."""
    groups = {}
    for k, pos in enumerate(model.round_positions):
        region = model.geometry.regions[pos]
        groups.setdefault(region, []).append(k)
    return {r: np.array(ks, dtype=np.int64) for r, ks in sorted(
        groups.items())}


def shot_rounds(model: DecodingModel, shot: Shot,
                cfg: StreamConfig) -> Iterator[RoundRecord]:
    """Expand a shot into per-region round records in time order."""
    groups = _region_round_indices(model)
    bits = shot.detector_bits.reshape(model.gamma, model.n_per_round)
    for t in range(model.gamma):
        ts = t * cfg.round_period_ns
        row = bits[t]
        for region, ks in groups.items():
            fired = ks[row[ks]]
            yield RoundRecord(region, t, tuple(int(k) for k in fired), ts)


_HDR = struct.Struct("<HIH")


def encode_round(record: RoundRecord) -> bytes:
    out = _HDR.pack(record.patch, record.round_index, len(record.indices))
    return out + struct.pack(f"<{len(record.indices)}I", *record.indices)


def decode_rounds(stream, cfg: StreamConfig) -> Iterator[RoundRecord]:
    """Parse wire-format records from a binary file-like object."""
    while True:
        hdr = stream.read(_HDR.size)
        if not hdr:
            return
        if len(hdr) < _HDR.size:
            raise ValueError("truncated round header")
        patch, round_index, count = _HDR.unpack(hdr)
        body = stream.read(4 * count)
        if len(body) < 4 * count:
            raise ValueError("truncated round payload")
        indices = struct.unpack(f"<{count}I", body)
        yield RoundRecord(patch, round_index, indices,
                          round_index * cfg.round_period_ns)


def stream_rounds(source, cfg: StreamConfig,
                  model: Optional[DecodingModel] = None,
                  sink=None) -> Iterator[RoundRecord]:
    """Emit rounds in strictly increasing time order, one batch of region
    records per round period.

    ``source`` is a Shot when hybrid_mode is off (``model`` required), or a
    binary stream in the round wire format when hybrid_mode is on. If a
    ``sink`` is given, each record is pushed into it; a sink backlog beyond
    cfg.high_water aborts with BacklogError.
    """
    if cfg.hybrid_mode:
        records = decode_rounds(source, cfg)
    else:
        if model is None:
            raise ValueError("model required when hybrid_mode is off")
        records = shot_rounds(model, source, cfg)
    start_wall = _time.monotonic()
    for rec in records:
        if cfg.time_scale > 0:
            target = start_wall + rec.timestamp_ns * cfg.time_scale * 1e-9
            delay = target - _time.monotonic()
            if delay > 0:
                _time.sleep(delay)
        if sink is not None:
            backlog = sink.push(rec)
            if backlog is not None and backlog > cfg.high_water:
                raise BacklogError(rec.round_index, backlog)
        yield rec
